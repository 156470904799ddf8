//! CSV tables and JSON-lines records for ports, flows and analysis output.

use std::path::Path;

use esle_core::corpus::{haversine_km, Location};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{read_bytes, write_bytes};
use crate::{Error, Result};

pub const PORT_COLUMNS: [&str; 3] = ["lat", "lon", "start_month"];
pub const FLOW_COLUMNS: [&str; 3] = ["lat", "lon", "hourly_mean"];
pub const PROJECTION_COLUMNS: [&str; 4] = ["class", "icw", "x", "y"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortRow {
    pub lat: f64,
    pub lon: f64,
    pub start_month: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowRow {
    pub lat: f64,
    pub lon: f64,
    pub hourly_mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub class: usize,
    pub icw: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVectorRow {
    pub class: usize,
    pub icw: u32,
    pub vec: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecommendationRow {
    pub rank: usize,
    pub n: usize,
    pub lat: f64,
    pub lon: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharedPickRow {
    pub rank: usize,
    pub n: usize,
    pub lat: f64,
    pub lon: f64,
    pub mean_rank: f64,
}

/// Writes `header` and then one record per row, so an empty table still
/// names its columns.
pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header)
        .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    write_bytes(path, &bytes)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let bytes = read_bytes(path)?;
    csv::Reader::from_reader(bytes.as_slice())
        .deserialize()
        .map(|r| {
            r.map_err(|e| {
                let offset = e.position().map_or(0, |p| p.byte());
                Error::format(path, offset, e.to_string())
            })
        })
        .collect()
}

/// Row of the tile whose center is nearest to `at`, ties to the lower row.
pub fn nearest_tile(tiles: &[Location], at: Location) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &t) in tiles.iter().enumerate() {
        let d = haversine_km(t, at);
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}
