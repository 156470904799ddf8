//! Model checkpoints: magic `ESLM`, a `u32` version, a `u64`
//! length-prefixed JSON header, then every parameter as a little-endian
//! `f64` in layer declaration order (weights before biases).

use std::path::Path;

use esle_core::nnet::{ModelParams, NetworkConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use super::{read_bytes, write_bytes};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ESLM";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub network: NetworkConfig,
    pub seed: u64,
    #[serde(default)]
    pub train: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub train: Option<TrainConfig>,
}

pub fn encode(params: &ModelParams, train: Option<&TrainConfig>) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        network: params.config().clone(),
        seed: params.seed,
        train: train.cloned(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub(crate) struct Cursor<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
    pub path: &'a Path,
}

impl<'a> Cursor<'a> {
    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.path,
                self.bytes.len() as u64,
                format!("truncated: {what} needs {n} bytes at offset {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let at = self.pos;
        if self.take(4, "magic")? != magic {
            return Err(Error::format(
                self.path,
                at as u64,
                format!("bad magic, expected {}", String::from_utf8_lossy(magic)),
            ));
        }
        Ok(())
    }

    pub fn version(&mut self, expected: u32) -> Result<()> {
        let at = self.pos;
        let v = self.u32("version")?;
        if v != expected {
            return Err(Error::format(
                self.path,
                at as u64,
                format!("unsupported version {v}"),
            ));
        }
        Ok(())
    }

    /// `count` values of `width` bytes; the length is checked before
    /// anything is allocated.
    pub fn array(&mut self, count: u64, width: usize, what: &str) -> Result<&'a [u8]> {
        let len = usize::try_from(count)
            .ok()
            .and_then(|c| c.checked_mul(width))
            .ok_or_else(|| {
                Error::format(
                    self.path,
                    self.pos as u64,
                    format!("{what}: length overflows"),
                )
            })?;
        self.take(len, what)
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(
                self.path,
                self.pos as u64,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let mut c = Cursor {
        bytes,
        pos: 0,
        path,
    };
    c.magic(MAGIC)?;
    c.version(VERSION)?;
    let len = c.u64("header length")?;
    let at = c.pos;
    let json = c.array(len, 1, "header")?;
    let header: CheckpointHeader = serde_json::from_slice(json)
        .map_err(|e| Error::format(path, at as u64, format!("header: {e}")))?;
    let want: usize = header
        .network
        .layers()?
        .iter()
        .map(|l| l.weight_len() + l.bias_len())
        .sum();
    let at = c.pos;
    let raw = c.array(want as u64, 8, "parameters")?;
    c.finish()?;
    let values = raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let params = ModelParams::from_values(&header.network, values, header.seed)
        .map_err(|e| Error::format(path, at as u64, e.to_string()))?;
    Ok(Checkpoint {
        params,
        train: header.train,
    })
}

pub fn write(path: &Path, params: &ModelParams, train: Option<&TrainConfig>) -> Result<()> {
    write_bytes(path, &encode(params, train)?)
}

pub fn read(path: &Path) -> Result<Checkpoint> {
    decode(&read_bytes(path)?, path)
}
