//! Simulator output files: event CSV, CIS frames, event frames and their
//! index files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::pgm;
use crate::cis::{CisFrame, ADC_MAX};
use crate::error::{Error, Result};
use crate::types::{Event, EventFrame, Micros, Polarity};

pub const EVENTS_CSV: &str = "events.csv";
pub const CIS_DIR: &str = "cis";
pub const CIS_INDEX: &str = "cis_index.csv";
pub const EVENT_FRAMES_DIR: &str = "event_frames";
pub const EVENTS_INDEX: &str = "events_index.csv";

/// Gray levels of the event-frame PGMs.
pub const GRAY_NONE: u8 = 128;
pub const GRAY_ON: u8 = 255;
pub const GRAY_OFF: u8 = 0;

pub fn events_csv(events: &[Event]) -> String {
    let mut s = String::with_capacity(16 * events.len() + 16);
    s.push_str("t_us,x,y,p\n");
    for e in events {
        let _ = writeln!(s, "{},{},{},{}", e.t, e.x, e.y, e.polarity.sign());
    }
    s
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn write_events(path: &Path, events: &[Event]) -> Result<()> {
    write_file(path, events_csv(events))
}

#[derive(Debug, Deserialize)]
struct EventRow {
    t_us: Micros,
    x: u32,
    y: u32,
    p: i8,
}

pub fn read_events(path: &Path) -> Result<Vec<Event>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let mut events = Vec::new();
    for row in reader.deserialize::<EventRow>() {
        let row = row.map_err(|e| Error::format(path, e.to_string()))?;
        let polarity =
            Polarity::from_sign(row.p).ok_or_else(|| Error::format(path, format!("polarity {}", row.p)))?;
        events.push(Event::new(row.t_us, row.x, row.y, polarity));
    }
    Ok(events)
}

fn index_csv(rows: &[(usize, Micros, String)]) -> String {
    let mut s = String::from("frame,timestamp_us,path\n");
    for (k, t, p) in rows {
        let _ = writeln!(s, "{k},{t},{p}");
    }
    s
}

/// Writes `cis/frame_<t_us>.pgm` (two-byte samples, maxval 1023) and
/// `cis_index.csv` under `out`. Returns the written paths.
pub fn write_cis_frames(out: &Path, frames: &[CisFrame]) -> Result<Vec<PathBuf>> {
    create_dir(&out.join(CIS_DIR))?;
    let mut rows = Vec::with_capacity(frames.len());
    let mut paths = Vec::with_capacity(frames.len());
    for (k, f) in frames.iter().enumerate() {
        let rel = format!("{CIS_DIR}/frame_{}.pgm", f.timestamp);
        let path = out.join(&rel);
        pgm::write(&path, f.width, f.height, ADC_MAX, &f.data)?;
        rows.push((k, f.timestamp, rel));
        paths.push(path);
    }
    write_file(&out.join(CIS_INDEX), index_csv(&rows))?;
    Ok(paths)
}

pub fn event_frame_gray(frame: &EventFrame) -> Vec<u8> {
    frame
        .data
        .iter()
        .map(|&v| match v {
            1 => GRAY_ON,
            -1 => GRAY_OFF,
            _ => GRAY_NONE,
        })
        .collect()
}

/// Writes `event_frames/ef_<k>.pgm` (8-bit) and `events_index.csv`.
pub fn write_event_frames(out: &Path, frames: &[EventFrame]) -> Result<Vec<PathBuf>> {
    create_dir(&out.join(EVENT_FRAMES_DIR))?;
    let mut rows = Vec::with_capacity(frames.len());
    let mut paths = Vec::with_capacity(frames.len());
    for (k, f) in frames.iter().enumerate() {
        let rel = format!("{EVENT_FRAMES_DIR}/ef_{k:06}.pgm");
        let path = out.join(&rel);
        pgm::write_gray8(&path, f.width, f.height, &event_frame_gray(f))?;
        rows.push((k, f.timestamp, rel));
        paths.push(path);
    }
    write_file(&out.join(EVENTS_INDEX), index_csv(&rows))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn events_header_and_rows() {
        let ev = [Event::new(5, 1, 2, Polarity::On), Event::new(7, 0, 0, Polarity::Off)];
        assert_eq!(events_csv(&ev), "t_us,x,y,p\n5,1,2,1\n7,0,0,-1\n");
        assert_eq!(events_csv(&[]), "t_us,x,y,p\n");
    }

    #[test]
    fn event_frame_encoding() {
        let f = EventFrame {
            width: 3,
            height: 1,
            timestamp: 0,
            data: vec![0, 1, -1],
        };
        assert_eq!(event_frame_gray(&f), vec![128, 255, 0]);
    }

    #[test]
    fn cis_files_and_index() {
        let dir = tempfile::tempdir().unwrap();
        let frames = vec![
            CisFrame { width: 2, height: 1, timestamp: 0, data: vec![0, 1023] },
            CisFrame { width: 2, height: 1, timestamp: 33333, data: vec![5, 6] },
        ];
        write_cis_frames(dir.path(), &frames).unwrap();
        let index = std::fs::read_to_string(dir.path().join(CIS_INDEX)).unwrap();
        assert_eq!(index, "frame,timestamp_us,path\n0,0,cis/frame_0.pgm\n1,33333,cis/frame_33333.pgm\n");
        let p = pgm::read(&dir.path().join("cis/frame_33333.pgm")).unwrap();
        assert_eq!((p.maxval, p.data), (1023, vec![5, 6]));
    }

    proptest! {
        #[test]
        fn events_round_trip(raw in proptest::collection::vec((0u64..1u64 << 40, 0u32..2000, 0u32..2000, any::<bool>()), 0..50)) {
            let dir = tempfile::tempdir().unwrap();
            let events: Vec<Event> = raw.into_iter()
                .map(|(t, x, y, on)| Event::new(t, x, y, if on { Polarity::On } else { Polarity::Off }))
                .collect();
            let path = dir.path().join("e.csv");
            write_events(&path, &events).unwrap();
            prop_assert_eq!(read_events(&path).unwrap(), events);
        }
    }
}
