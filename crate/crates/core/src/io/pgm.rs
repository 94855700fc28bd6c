//! Binary PGM (P5) reading and writing, 8- and 16-bit.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<u16>,
}

pub fn encode(width: usize, height: usize, maxval: u16, data: &[u16]) -> Vec<u8> {
    assert_eq!(data.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval < 256 {
        out.extend(data.iter().map(|&v| v as u8));
    } else {
        out.extend(data.iter().flat_map(|v| v.to_be_bytes()));
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Pgm> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "truncated PGM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(Error::format(path, "not a binary PGM (P5)"));
    }
    let mut num = |name: &str| -> Result<usize> {
        token()?
            .parse()
            .map_err(|_| Error::format(path, format!("bad {name} in PGM header")))
    };
    let (width, height, maxval) = (num("width")?, num("height")?, num("maxval")?);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(path, "maxval out of range"));
    }
    // single whitespace byte separates the header from the raster
    let raster = &bytes[(pos + 1).min(bytes.len())..];
    let n = width * height;
    let data: Vec<u16> = if maxval < 256 {
        if raster.len() < n {
            return Err(Error::format(path, "truncated raster"));
        }
        raster[..n].iter().map(|&v| v as u16).collect()
    } else {
        if raster.len() < 2 * n {
            return Err(Error::format(path, "truncated raster"));
        }
        raster[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        data,
    })
}

pub fn read(path: &Path) -> Result<Pgm> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn write(path: &Path, width: usize, height: usize, maxval: u16, data: &[u16]) -> Result<()> {
    std::fs::write(path, encode(width, height, maxval, data)).map_err(|e| Error::io(path, e))
}

pub fn write_gray8(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    let wide: Vec<u16> = data.iter().map(|&v| v as u16).collect();
    write(path, width, height, 255, &wide)
}
