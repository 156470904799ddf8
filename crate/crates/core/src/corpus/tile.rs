use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::Location;
use crate::rng::{self, stream};
use crate::{Error, Result};

pub const CHANNELS: usize = 3;

/// A square RGB map tile centered at a location.
///
/// Pixels are stored as 8-bit channel values in channel-major order; the
/// model sees them as `value / 255`.
#[derive(Debug, Clone, PartialEq)]
pub struct TileImage {
    pub location: Location,
    size: usize,
    data: Vec<u8>,
}

impl TileImage {
    pub fn new(location: Location, size: usize, data: Vec<u8>) -> Result<Self> {
        if size == 0 || data.len() != CHANNELS * size * size {
            return Err(Error::Shape(format!(
                "tile of side {size} needs {} bytes, got {}",
                CHANNELS * size * size,
                data.len()
            )));
        }
        Ok(Self {
            location,
            size,
            data,
        })
    }

    pub fn filled(location: Location, size: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(CHANNELS * size * size);
        for c in rgb {
            data.extend(core::iter::repeat_n(c, size * size));
        }
        Self {
            location,
            size,
            data,
        }
    }

    /// Builds a tile from interleaved RGB rows, the layout of PPM files.
    pub fn from_interleaved(location: Location, size: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != CHANNELS * size * size {
            return Err(Error::Shape(format!(
                "interleaved buffer of {} bytes for side {size}",
                rgb.len()
            )));
        }
        let plane = size * size;
        let mut data = alloc::vec![0u8; CHANNELS * plane];
        for (p, px) in rgb.chunks_exact(CHANNELS).enumerate() {
            for c in 0..CHANNELS {
                data[c * plane + p] = px[c];
            }
        }
        Ok(Self {
            location,
            size,
            data,
        })
    }

    pub fn to_interleaved(&self) -> Vec<u8> {
        let plane = self.size * self.size;
        let mut out = Vec::with_capacity(self.data.len());
        for p in 0..plane {
            for c in 0..CHANNELS {
                out.push(self.data[c * plane + p]);
            }
        }
        out
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn raw(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> u8 {
        self.data[(c * self.size + y) * self.size + x]
    }

    pub fn set_rgb(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let plane = self.size * self.size;
        for (c, v) in rgb.into_iter().enumerate() {
            self.data[c * plane + y * self.size + x] = v;
        }
    }

    pub fn rgb(&self, y: usize, x: usize) -> [u8; 3] {
        [self.get(0, y, x), self.get(1, y, x), self.get(2, y, x)]
    }

    /// Appends the normalized pixel values, channel-major, to `out`.
    pub fn write_normalized(&self, out: &mut Vec<f64>) {
        out.extend(self.data.iter().map(|&v| v as f64 / 255.0));
    }

    /// The single color of a flat tile.
    pub fn constant_color(&self) -> Option<[u8; 3]> {
        let first = self.rgb(0, 0);
        let plane = self.size * self.size;
        let flat = (0..CHANNELS).all(|c| {
            self.data[c * plane..(c + 1) * plane]
                .iter()
                .all(|&v| v == first[c])
        });
        flat.then_some(first)
    }
}

/// Mean of the per-channel population variances, on the `[0, 1]` scale.
/// Sums are exact integers, so a constant channel contributes exactly zero.
pub fn pixel_variance(tile: &TileImage) -> f64 {
    let plane = tile.size * tile.size;
    let n = plane as u128;
    let total: u128 = tile
        .data
        .chunks_exact(plane)
        .map(|ch| {
            let (s, s2) = ch.iter().fold((0u128, 0u128), |(s, s2), &v| {
                (s + v as u128, s2 + (v as u128).pow(2))
            });
            n * s2 - s * s
        })
        .sum();
    total as f64 / (n * n * CHANNELS as u128) as f64 / (255.0 * 255.0)
}

/// Rotates clockwise by `quarter_turns` x 90 degrees (taken mod 4).
pub fn rotate_tile(tile: &TileImage, quarter_turns: u8) -> TileImage {
    let s = tile.size;
    let turns = quarter_turns % 4;
    if turns == 0 {
        return tile.clone();
    }
    let mut data = alloc::vec![0u8; tile.data.len()];
    for c in 0..CHANNELS {
        let src = &tile.data[c * s * s..(c + 1) * s * s];
        let dst = &mut data[c * s * s..(c + 1) * s * s];
        for y in 0..s {
            for x in 0..s {
                let (sy, sx) = match turns {
                    1 => (s - 1 - x, y),
                    2 => (s - 1 - y, s - 1 - x),
                    _ => (x, s - 1 - y),
                };
                dst[y * s + x] = src[sy * s + sx];
            }
        }
    }
    TileImage {
        location: tile.location,
        size: s,
        data,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TileSource {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileRecord {
    pub n: usize,
    pub lat: f64,
    pub lon: f64,
    pub source: TileSource,
    pub flat: bool,
}

/// An ordered, immutable set of tiles with a dense manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct TileCorpus {
    tiles: Vec<TileImage>,
    manifest: Vec<TileRecord>,
}

impl TileCorpus {
    pub fn new(tiles: Vec<TileImage>, source: TileSource) -> Result<Self> {
        let sources = alloc::vec![source; tiles.len()];
        Self::with_sources(tiles, &sources)
    }

    pub fn with_sources(tiles: Vec<TileImage>, sources: &[TileSource]) -> Result<Self> {
        if sources.len() != tiles.len() {
            return Err(Error::Shape(format!(
                "{} tiles, {} sources",
                tiles.len(),
                sources.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for t in &tiles {
            if !seen.insert((t.location.lat.to_bits(), t.location.lon.to_bits())) {
                return Err(Error::InvalidInput(format!(
                    "duplicate tile location ({}, {})",
                    t.location.lat, t.location.lon
                )));
            }
        }
        let manifest = tiles
            .iter()
            .zip(sources)
            .enumerate()
            .map(|(n, (t, &source))| TileRecord {
                n,
                lat: t.location.lat,
                lon: t.location.lon,
                source,
                flat: t.constant_color().is_some(),
            })
            .collect();
        Ok(Self { tiles, manifest })
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn tiles(&self) -> &[TileImage] {
        &self.tiles
    }

    pub fn manifest(&self) -> &[TileRecord] {
        &self.manifest
    }

    pub fn locations(&self) -> Vec<Location> {
        self.tiles.iter().map(|t| t.location).collect()
    }
}

/// Reference colors that decide which kind a flat tile belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatKinds {
    pub colors: Vec<[u8; 3]>,
}

impl Default for FlatKinds {
    /// Sea and green land, as drawn by the standard OSM style.
    fn default() -> Self {
        Self {
            colors: alloc::vec![[170, 211, 223], [205, 235, 176]],
        }
    }
}

impl FlatKinds {
    pub fn kind_of(&self, rgb: [u8; 3]) -> usize {
        let dist =
            |c: &[u8; 3]| -> i32 { (0..3).map(|i| (c[i] as i32 - rgb[i] as i32).pow(2)).sum() };
        self.colors
            .iter()
            .enumerate()
            .min_by_key(|(_, c)| dist(c))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Keeps every tile with pixel variation and at most `keep_per_kind` flat
/// tiles of each kind. The surviving tiles keep their relative order and are
/// re-indexed densely.
pub fn filter_flat_tiles(
    corpus: &TileCorpus,
    keep_per_kind: usize,
    seed: u64,
    kinds: &FlatKinds,
) -> TileCorpus {
    let mut by_kind: Vec<Vec<usize>> = alloc::vec![Vec::new(); kinds.colors.len().max(1)];
    for (i, t) in corpus.tiles.iter().enumerate() {
        if let Some(rgb) = t.constant_color() {
            by_kind[kinds.kind_of(rgb)].push(i);
        }
    }
    let mut rng = rng::seeded(seed, stream::FILTER);
    let mut dropped = BTreeSet::new();
    for flats in &mut by_kind {
        rng::shuffle(flats, &mut rng);
        dropped.extend(flats.iter().skip(keep_per_kind).copied());
    }
    let mut tiles = Vec::new();
    let mut manifest = Vec::new();
    for (i, (t, rec)) in corpus.tiles.iter().zip(&corpus.manifest).enumerate() {
        if dropped.contains(&i) {
            continue;
        }
        manifest.push(TileRecord {
            n: tiles.len(),
            ..*rec
        });
        tiles.push(t.clone());
    }
    TileCorpus { tiles, manifest }
}
