//! Binary PPM (P6) tiles with 8-bit channels.

use std::path::Path;

use esle_core::corpus::{Location, TileImage};

use super::{read_bytes, write_bytes};
use crate::{Error, Result};

pub fn tile_file_name(n: usize) -> String {
    format!("tile_{n:08}.ppm")
}

pub fn encode(tile: &TileImage) -> Vec<u8> {
    let s = tile.size();
    let mut out = format!("P6\n{s} {s}\n255\n").into_bytes();
    out.extend(tile.to_interleaved());
    out
}

/// Parses a square P6 image; the location comes from the corpus manifest.
pub fn decode(bytes: &[u8], location: Location, path: &Path) -> Result<TileImage> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, pos as u64, "truncated PPM header"));
        }
        fields.push((start, &bytes[start..pos]));
    }
    if fields[0].1 != b"P6" {
        return Err(Error::format(path, 0, "not a binary PPM (P6)"));
    }
    let number = |i: usize| -> Result<usize> {
        let (at, text) = fields[i];
        std::str::from_utf8(text)
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::format(path, at as u64, "bad PPM header number"))
    };
    let (w, h, max) = (number(1)?, number(2)?, number(3)?);
    if max != 255 {
        return Err(Error::format(
            path,
            fields[3].0 as u64,
            format!("max value {max}, expected 255"),
        ));
    }
    if w != h {
        return Err(Error::format(
            path,
            fields[1].0 as u64,
            format!("{w}x{h} tile is not square"),
        ));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = pos + 1;
    let want = 3 * w * h;
    if bytes.len() != data + want {
        return Err(Error::format(
            path,
            bytes.len().min(data + want) as u64,
            format!(
                "raster of {} bytes, expected {want}",
                bytes.len().saturating_sub(data)
            ),
        ));
    }
    Ok(TileImage::from_interleaved(location, w, &bytes[data..])?)
}

pub fn write(path: &Path, tile: &TileImage) -> Result<()> {
    write_bytes(path, &encode(tile))
}

pub fn read(path: &Path, location: Location) -> Result<TileImage> {
    decode(&read_bytes(path)?, location, path)
}
