use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
use libm::{asin, asinh, ceil, cos, floor, round, sin, sqrt, tan};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Mean Earth radius used for all great-circle distances.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;
/// Latitude where the Web-Mercator square ends.
pub const MAX_MERCATOR_LAT: f64 = 85.051_128_779_806_59;
pub const MAX_ZOOM: u8 = 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub lat: f64,
    pub lon: f64,
}

impl Location {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::Range(format!("location ({lat}, {lon})")));
        }
        Ok(Self { lat, lon })
    }
}

/// Slippy-map tile containing `loc` at `zoom`.
pub fn location_to_tile_index(loc: Location, zoom: u8) -> Result<(u32, u32)> {
    if zoom > MAX_ZOOM {
        return Err(Error::Range(format!("zoom {zoom} > {MAX_ZOOM}")));
    }
    if !(loc.lat.abs() < MAX_MERCATOR_LAT) || !(-180.0..=180.0).contains(&loc.lon) {
        return Err(Error::Range(format!(
            "({}, {}) is outside the Web-Mercator square",
            loc.lat, loc.lon
        )));
    }
    let n = (1u64 << zoom) as f64;
    let max = (1u64 << zoom) - 1;
    let x = floor((loc.lon + 180.0) / 360.0 * n) as u64;
    let lat = loc.lat.to_radians();
    let y = floor((1.0 - asinh(tan(lat)) / PI) / 2.0 * n) as u64;
    Ok((x.min(max) as u32, y.min(max) as u32))
}

/// Great-circle distance.
pub fn haversine_km(a: Location, b: Location) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let s1 = sin(dp / 2.0);
    let s2 = sin(dl / 2.0);
    let h = s1 * s1 + cos(p1) * cos(p2) * s2 * s2;
    2.0 * EARTH_RADIUS_KM * asin(sqrt(h.min(1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn is_empty(&self) -> bool {
        !(self.min_lat <= self.max_lat && self.min_lon <= self.max_lon)
    }
}

/// How grid spacing is derived from the nominal step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GridSpacing {
    /// Evenly spaced centers no more than `step_m` apart on the ground along
    /// either axis, corners included.
    #[default]
    Metric,
    /// Japanese regional mesh: the 500 m half mesh is 15" of latitude by
    /// 22.5" of longitude, scaled linearly with the step.
    RegionalMesh,
}

/// Tile centers covering `bbox`, row-major from the south-west corner.
pub fn tile_coverage_grid(
    bbox: BoundingBox,
    step_m: f64,
    spacing: GridSpacing,
) -> Result<Vec<Location>> {
    if !(step_m > 0.0) {
        return Err(Error::InvalidInput(format!("grid step {step_m} m")));
    }
    if bbox.is_empty() {
        return Ok(Vec::new());
    }
    let dlat = bbox.max_lat - bbox.min_lat;
    let dlon = bbox.max_lon - bbox.min_lon;
    let (rows, cols) = match spacing {
        GridSpacing::Metric => {
            let km_per_deg = EARTH_RADIUS_KM * PI / 180.0;
            // widest parallel in the box bounds the east-west spacing
            let min_abs_lat = if bbox.min_lat <= 0.0 && bbox.max_lat >= 0.0 {
                0.0
            } else {
                bbox.min_lat.abs().min(bbox.max_lat.abs())
            };
            let lat_m = dlat * km_per_deg * 1000.0;
            let lon_m = dlon * km_per_deg * 1000.0 * cos(min_abs_lat.to_radians());
            (steps(lat_m / step_m), steps(lon_m / step_m))
        }
        GridSpacing::RegionalMesh => {
            let scale = step_m / 500.0;
            let lat_step = scale * 15.0 / 3600.0;
            let lon_step = scale * 22.5 / 3600.0;
            (
                round(dlat / lat_step) as usize + 1,
                round(dlon / lon_step) as usize + 1,
            )
        }
    };
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let lat = lerp(bbox.min_lat, bbox.max_lat, r, rows);
        for c in 0..cols {
            out.push(Location {
                lat,
                lon: lerp(bbox.min_lon, bbox.max_lon, c, cols),
            });
        }
    }
    Ok(out)
}

fn steps(span_in_steps: f64) -> usize {
    // tolerate round-off so a span of exactly k steps gives k + 1 centers
    ceil(span_in_steps - 1e-9).max(0.0) as usize + 1
}

fn lerp(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if n == 1 {
        lo
    } else if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}
