//! Directories of `frame_<t_us>.pgm` files and `(path, timestamp_us)`
//! manifests, exposed as lazily loaded frame sources.

use std::borrow::Cow;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::pgm;
use crate::error::{Error, Result};
use crate::source::FrameSource;
use crate::types::{IntensityFrame, Micros};

/// Manifest file names looked up inside an input directory, in order.
pub const MANIFEST_NAMES: &[&str] = &["manifest.csv", "cis_index.csv"];

#[derive(Debug, Clone, PartialEq)]
pub struct FrameEntry {
    pub path: PathBuf,
    pub timestamp: Micros,
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    path: String,
    timestamp_us: Micros,
}

/// Reads a CSV manifest with `path` and `timestamp_us` columns (other
/// columns are ignored). Relative paths resolve against the manifest's
/// directory.
pub fn read_manifest(path: &Path) -> Result<Vec<FrameEntry>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let mut entries = Vec::new();
    for row in reader.deserialize::<ManifestRow>() {
        let row = row.map_err(|e| Error::format(path, e.to_string()))?;
        entries.push(FrameEntry {
            path: base.join(row.path),
            timestamp: row.timestamp_us,
        });
    }
    Ok(entries)
}

fn timestamp_from_name(name: &str) -> Option<Micros> {
    name.strip_prefix("frame_")?.strip_suffix(".pgm")?.parse().ok()
}

/// Lists the frames of an input: a manifest file, a directory holding a
/// manifest, or a directory of `frame_<t_us>.pgm` files. Entries come back
/// in manifest order, or sorted by timestamp for bare directories.
pub fn list_frames(input: &Path) -> Result<Vec<FrameEntry>> {
    if input.is_file() {
        return read_manifest(input);
    }
    for name in MANIFEST_NAMES {
        let m = input.join(name);
        if m.is_file() {
            return read_manifest(&m);
        }
    }
    let dir = std::fs::read_dir(input).map_err(|e| Error::io(input, e))?;
    let mut entries = Vec::new();
    for item in dir {
        let item = item.map_err(|e| Error::io(input, e))?;
        let name = item.file_name();
        if let Some(t) = name.to_str().and_then(timestamp_from_name) {
            entries.push(FrameEntry {
                path: item.path(),
                timestamp: t,
            });
        }
    }
    entries.sort_by_key(|e| e.timestamp);
    Ok(entries)
}

/// Frame source backed by PGM files, read on demand. Sample values are
/// taken as linear intensities.
#[derive(Debug, Clone)]
pub struct DirSource {
    entries: Vec<FrameEntry>,
    width: usize,
    height: usize,
}

impl DirSource {
    pub fn open(input: &Path) -> Result<Self> {
        let entries = list_frames(input)?;
        let (width, height) = match entries.first() {
            Some(e) => {
                let p = pgm::read(&e.path)?;
                (p.width, p.height)
            }
            None => (0, 0),
        };
        Ok(DirSource {
            entries,
            width,
            height,
        })
    }

    pub fn entries(&self) -> &[FrameEntry] {
        &self.entries
    }

    pub fn read_pgm(&self, index: usize) -> Result<pgm::Pgm> {
        let e = &self.entries[index];
        let p = pgm::read(&e.path)?;
        if p.width != self.width || p.height != self.height {
            return Err(Error::format(
                &e.path,
                format!("{}x{} frame in a {}x{} sequence", p.width, p.height, self.width, self.height),
            ));
        }
        Ok(p)
    }
}

impl FrameSource for DirSource {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn timestamp(&self, index: usize) -> Micros {
        self.entries[index].timestamp
    }

    fn frame(&self, index: usize) -> Result<Cow<'_, IntensityFrame>> {
        let p = self.read_pgm(index)?;
        let data = p.data.iter().map(|&v| v as f64).collect();
        IntensityFrame::new(p.width, p.height, self.entries[index].timestamp, data).map(Cow::Owned)
    }
}
