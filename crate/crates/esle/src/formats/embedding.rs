//! Embedding matrices: magic `ESLE`, `u32` version, `u64` rows, `u32`
//! columns, a `u8` value type (0 = f32, 1 = f64), then the values
//! row-major and little-endian. Row provenance lives in a JSON-lines
//! manifest next to the matrix.

use std::path::{Path, PathBuf};

use esle_core::embed::{EmbeddingMatrix, ManifestRow};
use serde::{Deserialize, Serialize};

use super::checkpoint::Cursor;
use super::{read_bytes, read_jsonl, write_bytes, write_jsonl};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ESLE";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Self::F32 => 0,
            Self::F64 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.jsonl");
    PathBuf::from(s)
}

/// Matrix bytes. With `F32` every value is rounded to single precision.
pub fn encode(matrix: &EmbeddingMatrix, dtype: Dtype) -> Result<Vec<u8>> {
    let dim =
        u32::try_from(matrix.dim()).map_err(|_| Error::Invalid("embedding too wide".into()))?;
    let mut out = Vec::with_capacity(21 + matrix.values().len() * dtype.width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(matrix.len() as u64).to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.push(dtype.code());
    for &v in matrix.values() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    Ok(out)
}

/// Values and column count; the manifest is read separately.
pub fn decode_values(bytes: &[u8], path: &Path) -> Result<(usize, Vec<f64>)> {
    let mut c = Cursor {
        bytes,
        pos: 0,
        path,
    };
    c.magic(MAGIC)?;
    c.version(VERSION)?;
    let rows = c.u64("row count")?;
    let dim = c.u32("column count")? as usize;
    let at = c.pos;
    let dtype = match c.u8("value type")? {
        0 => Dtype::F32,
        1 => Dtype::F64,
        code => {
            return Err(Error::format(
                path,
                at as u64,
                format!("unknown value type {code}"),
            ))
        }
    };
    let count = rows
        .checked_mul(dim as u64)
        .ok_or_else(|| Error::format(path, at as u64, "matrix size overflows"))?;
    let raw = c.array(count, dtype.width(), "values")?;
    c.finish()?;
    let values = match dtype {
        Dtype::F32 => raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect(),
        Dtype::F64 => raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect(),
    };
    Ok((dim, values))
}

pub fn write(path: &Path, matrix: &EmbeddingMatrix, dtype: Dtype) -> Result<()> {
    write_bytes(path, &encode(matrix, dtype)?)?;
    write_jsonl(&manifest_path(path), matrix.manifest())
}

pub fn read(path: &Path) -> Result<EmbeddingMatrix> {
    let (dim, values) = decode_values(&read_bytes(path)?, path)?;
    let manifest: Vec<ManifestRow> = read_jsonl(&manifest_path(path))?;
    Ok(EmbeddingMatrix::new(dim, values, manifest)?)
}
