//! Desk-scale stand-in for rendered map tiles.
//!
//! A scene places primitives on a grid of `CELL_PX` x `CELL_PX` cells.
//! Buildings and roads are small marks in the top `MARK_ROWS` pixel rows of
//! one cell. Every other class is drawn as stripes: one stripe fills the
//! remaining pixel rows of a whole row of cells, so stripes and marks never
//! overlap and no two stripes touch. Every class has its own exact color,
//! so counting the 4-connected components of a class color recovers the
//! scene's counts.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Location, TileImage};
use crate::labels::{MetaCounts, Tags, BUILDINGS, NUM_META_CLASSES, ROAD};
use crate::rng::{self, stream};
use crate::{Error, Result};

pub const CELL_PX: usize = 4;
pub const MIN_SIZE: usize = 16;
/// Pixel rows at the top of each cell reserved for marks.
pub const MARK_ROWS: usize = 2;

/// Exact draw color per meta class.
pub const CLASS_COLORS: [[u8; 3]; NUM_META_CLASSES] = [
    [200, 60, 60], // buildings
    [255, 128, 0], // highway
    [128, 0, 0],   // peak
    [0, 0, 255],   // water
    [0, 255, 255], // river
    [128, 0, 255], // railway
    [255, 0, 255], // rail station
    [0, 128, 0],   // park
    [255, 255, 0], // playground
    [20, 20, 20],  // road
    [0, 128, 255], // airport
    [255, 0, 128], // trail
    [128, 128, 0], // farmland
    [0, 255, 0],   // grassland
];

// (row, col) pixel offsets of the single-cell marks; both are 4-connected
const BUILDING_MARK: &[(usize, usize)] = &[(0, 0), (0, 1), (1, 0), (1, 1)];
const ROAD_MARK: &[(usize, usize)] = &[(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)];

/// OSM tags a synthetic element of each class carries; they match the
/// default rule table.
pub const CLASS_TAGS: [(&str, &str); NUM_META_CLASSES] = [
    ("building", "yes"),
    ("highway", "motorway"),
    ("natural", "peak"),
    ("natural", "water"),
    ("waterway", "river"),
    ("railway", "rail"),
    ("railway", "station"),
    ("leisure", "park"),
    ("leisure", "playground"),
    ("highway", "residential"),
    ("aeroway", "aerodrome"),
    ("highway", "footway"),
    ("landuse", "farmland"),
    ("landuse", "grass"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Background {
    Land,
    Sea,
    Green,
}

impl Background {
    pub fn rgb(self) -> [u8; 3] {
        match self {
            Background::Land => [242, 239, 233],
            Background::Sea => [170, 211, 223],
            Background::Green => [205, 235, 176],
        }
    }
}

/// Requested primitive count per meta class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub counts: [u32; NUM_META_CLASSES],
}

/// How a class is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapeKind {
    /// A small mark inside one cell.
    Mark,
    /// A full-width stripe below the marks of one row of cells.
    Stripe,
}

pub fn shape_kind(class: usize) -> ShapeKind {
    match class {
        BUILDINGS | ROAD => ShapeKind::Mark,
        _ => ShapeKind::Stripe,
    }
}

/// `class` at cell (`row`, `col`); stripes always have `col == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub class: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub seed: u64,
    pub size: usize,
    pub background: Background,
    objects: Vec<PlacedObject>,
}

impl SyntheticScene {
    /// Places the profile's primitives in random free positions, larger
    /// kinds first. Requests beyond the grid capacity are dropped, so
    /// `counts()` always reflects what is drawn.
    pub fn sample(
        seed: u64,
        size: usize,
        profile: &ClassProfile,
        background: Background,
    ) -> Result<Self> {
        if size < MIN_SIZE {
            return Err(Error::InvalidInput(format!(
                "synthetic tile size {size} < {MIN_SIZE}"
            )));
        }
        let mut scene = Self {
            seed,
            size,
            background,
            objects: Vec::new(),
        };
        let mut rng = rng::seeded(seed, stream::SCENE);
        for (class, &want) in profile.counts.iter().enumerate() {
            scene.place(class, want, &mut rng);
        }
        Ok(scene)
    }

    pub fn grid_side(&self) -> usize {
        self.size / CELL_PX
    }

    pub fn objects(&self) -> &[PlacedObject] {
        &self.objects
    }

    /// Places up to `count` primitives of `class` at shuffled free positions.
    fn place(&mut self, class: usize, count: u32, rng: &mut rng::SeededRng) {
        if count == 0 {
            return;
        }
        let g = self.grid_side();
        let kind = shape_kind(class);
        let mut taken: BTreeSet<(usize, usize)> = self
            .objects
            .iter()
            .filter(|o| shape_kind(o.class) == kind)
            .map(|o| (o.row, o.col))
            .collect();
        let mut candidates: Vec<(usize, usize)> = match kind {
            ShapeKind::Mark => (0..g).flat_map(|r| (0..g).map(move |c| (r, c))).collect(),
            ShapeKind::Stripe => (0..g).map(|r| (r, 0)).collect(),
        };
        rng::shuffle(&mut candidates, rng);
        let mut placed = 0;
        for (row, col) in candidates {
            if placed == count {
                break;
            }
            let free = !taken.contains(&(row, col));
            if free {
                taken.insert((row, col));
                self.objects.push(PlacedObject { class, row, col });
                placed += 1;
            }
        }
    }

    /// The same scene with up to `count` more primitives of `class` in free
    /// positions.
    pub fn with_extra(&self, class: usize, count: u32) -> Self {
        let mut scene = self.clone();
        let mut rng = rng::seeded(self.seed, stream::SCENE + 0x100 + class as u64);
        scene.place(class, count, &mut rng);
        scene
    }

    pub fn counts(&self) -> MetaCounts {
        let mut c = MetaCounts::default();
        for o in &self.objects {
            c.0[o.class] += 1;
        }
        c
    }

    pub fn render(&self, location: Location) -> TileImage {
        let mut tile = TileImage::filled(location, self.size, self.background.rgb());
        for o in &self.objects {
            let color = CLASS_COLORS[o.class];
            let (y0, x0) = (o.row * CELL_PX, o.col * CELL_PX);
            match shape_kind(o.class) {
                ShapeKind::Stripe => {
                    for y in y0 + MARK_ROWS..y0 + CELL_PX {
                        for x in 0..self.size {
                            tile.set_rgb(y, x, color);
                        }
                    }
                }
                ShapeKind::Mark => {
                    let mark = if o.class == ROAD {
                        ROAD_MARK
                    } else {
                        BUILDING_MARK
                    };
                    for &(dy, dx) in mark {
                        tile.set_rgb(y0 + dy, x0 + dx, color);
                    }
                }
            }
        }
        tile
    }

    /// One tagged element per placed primitive.
    pub fn elements(&self) -> Vec<Tags> {
        self.objects
            .iter()
            .map(|o| {
                let (k, v) = CLASS_TAGS[o.class];
                let mut t = Tags::new();
                t.insert(k.to_string(), v.to_string());
                t
            })
            .collect()
    }

    /// Amenities scattered around the scene. Their rate grows with the urban
    /// content of the tile, so amenity statistics correlate with labels.
    pub fn amenities(&self) -> Vec<String> {
        const URBAN: [&str; 8] = [
            "restaurant",
            "cafe",
            "fast_food",
            "pub",
            "vending_machine",
            "bank",
            "pharmacy",
            "convenience",
        ];
        const ANYWHERE: [&str; 4] = ["bench", "toilets", "parking", "place_of_worship"];
        let c = self.counts();
        let mut rng = rng::seeded(self.seed, stream::POI);
        let urban = c.0[BUILDINGS] as f64 / 6.0 + c.0[ROAD] as f64 / 10.0 + 4.0 * c.0[6] as f64;
        let mut out = Vec::new();
        for (i, name) in URBAN.iter().enumerate() {
            let rate = urban / (i as f64 + 1.0);
            out.extend(core::iter::repeat_n(
                name.to_string(),
                poisson(&mut rng, rate),
            ));
        }
        for name in ANYWHERE {
            out.extend(core::iter::repeat_n(
                name.to_string(),
                poisson(&mut rng, 0.5),
            ));
        }
        if c.0[7] > 0 || c.0[8] > 0 {
            out.extend(core::iter::repeat_n(
                "drinking_water".to_string(),
                poisson(&mut rng, 1.0),
            ));
        }
        out
    }
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> usize {
    // Knuth's method; rates here stay small
    let limit = libm::exp(-rate.min(60.0));
    let mut k = 0;
    let mut p: f64 = rng.random();
    while p > limit {
        k += 1;
        p *= rng.random::<f64>();
    }
    k
}

/// Renders the scene for `profile` on the land background.
pub fn generate_synthetic_tile(
    seed: u64,
    size: usize,
    profile: &ClassProfile,
    location: Location,
) -> Result<(TileImage, MetaCounts)> {
    let scene = SyntheticScene::sample(seed, size, profile, Background::Land)?;
    Ok((scene.render(location), scene.counts()))
}

/// Distribution of random scene content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileMix {
    /// Probability of 0, 1, 2, ... active two-state classes.
    pub active_classes: Vec<f64>,
    /// Probability of the less / some / more building bucket.
    pub building_buckets: [f64; 3],
    pub road_buckets: [f64; 3],
    /// Count range for an active two-state class.
    pub presence_count: (u32, u32),
}

impl Default for ProfileMix {
    fn default() -> Self {
        Self {
            active_classes: alloc::vec![0.15, 0.4, 0.3, 0.15],
            building_buckets: [0.4, 0.35, 0.25],
            road_buckets: [0.45, 0.3, 0.25],
            presence_count: (7, 10),
        }
    }
}

const BUILDING_RANGES: [(u32, u32); 3] = [(0, 1), (10, 40), (90, 130)];
const ROAD_RANGES: [(u32, u32); 3] = [(0, 6), (18, 26), (42, 70)];

fn pick<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

pub fn sample_profile<R: Rng + ?Sized>(rng: &mut R, mix: &ProfileMix) -> ClassProfile {
    let mut counts = [0u32; NUM_META_CLASSES];
    let (lo, hi) = BUILDING_RANGES[pick(rng, &mix.building_buckets)];
    counts[BUILDINGS] = rng.random_range(lo..=hi);
    let (lo, hi) = ROAD_RANGES[pick(rng, &mix.road_buckets)];
    counts[ROAD] = rng.random_range(lo..=hi);
    let mut presence: Vec<usize> = crate::labels::presence_classes().map(|(c, _)| c).collect();
    rng::shuffle(&mut presence, rng);
    let k = pick(rng, &mix.active_classes).min(presence.len());
    for &c in &presence[..k] {
        counts[c] = rng.random_range(mix.presence_count.0..=mix.presence_count.1);
    }
    ClassProfile { counts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::pixel_variance;
    use crate::labels::{binarize_meta, count_meta, RuleTable};
    use proptest::prelude::*;

    const HERE: Location = Location {
        lat: 35.0,
        lon: 139.0,
    };

    /// Independent recount: 4-connected components of each exact class color.
    fn recount(tile: &TileImage) -> MetaCounts {
        let s = tile.size();
        let mut seen = alloc::vec![false; s * s];
        let mut counts = MetaCounts::default();
        for y in 0..s {
            for x in 0..s {
                if seen[y * s + x] {
                    continue;
                }
                let rgb = tile.rgb(y, x);
                let Some(class) = CLASS_COLORS.iter().position(|&c| c == rgb) else {
                    continue;
                };
                counts.0[class] += 1;
                let mut stack = alloc::vec![(y, x)];
                seen[y * s + x] = true;
                while let Some((cy, cx)) = stack.pop() {
                    let mut nb = Vec::new();
                    if cy > 0 {
                        nb.push((cy - 1, cx));
                    }
                    if cx > 0 {
                        nb.push((cy, cx - 1));
                    }
                    if cy + 1 < s {
                        nb.push((cy + 1, cx));
                    }
                    if cx + 1 < s {
                        nb.push((cy, cx + 1));
                    }
                    for (ny, nx) in nb {
                        if !seen[ny * s + nx] && tile.rgb(ny, nx) == rgb {
                            seen[ny * s + nx] = true;
                            stack.push((ny, nx));
                        }
                    }
                }
            }
        }
        counts
    }

    #[test]
    fn colors_are_distinct_from_each_other_and_backgrounds() {
        let mut all: Vec<[u8; 3]> = CLASS_COLORS.to_vec();
        all.extend([Background::Land, Background::Sea, Background::Green].map(Background::rgb));
        let set: BTreeSet<_> = all.iter().collect();
        assert_eq!(set.len(), all.len());
    }

    #[test]
    fn same_seed_same_tile() {
        let p = ClassProfile {
            counts: [5, 1, 0, 2, 0, 0, 1, 0, 0, 20, 0, 0, 0, 1],
        };
        let a = generate_synthetic_tile(7, 64, &p, HERE).unwrap();
        let b = generate_synthetic_tile(7, 64, &p, HERE).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1 .0[BUILDINGS], 5);
    }

    #[test]
    fn empty_profile_is_flat() {
        let (tile, counts) =
            generate_synthetic_tile(1, 32, &ClassProfile::default(), HERE).unwrap();
        assert_eq!(pixel_variance(&tile), 0.0);
        assert_eq!(counts, MetaCounts::default());
    }

    #[test]
    fn too_small_is_rejected() {
        assert!(generate_synthetic_tile(1, 8, &ClassProfile::default(), HERE).is_err());
    }

    #[test]
    fn capacity_overflow_reports_drawn_counts() {
        let mut p = ClassProfile::default();
        p.counts[BUILDINGS] = 100;
        let (tile, counts) = generate_synthetic_tile(3, 16, &p, HERE).unwrap();
        assert_eq!(counts.0[BUILDINGS], 16);
        assert_eq!(recount(&tile), counts);
    }

    #[test]
    fn extra_primitives_only_add_one_class() {
        let p = ClassProfile {
            counts: [4, 0, 0, 0, 0, 0, 0, 0, 0, 3, 0, 0, 0, 0],
        };
        let base = SyntheticScene::sample(11, 64, &p, Background::Land).unwrap();
        let more = base.with_extra(7, 2);
        assert_eq!(recount(&more.render(HERE)), more.counts());
        let (a, b) = (base.counts(), more.counts());
        assert_eq!(b.0[7], 2);
        assert_eq!(a.0[..7], b.0[..7]);
        assert_eq!(a.0[8..], b.0[8..]);
        assert_eq!(&more.objects()[..base.objects().len()], base.objects());
    }

    #[test]
    fn every_kind_recounts_exactly() {
        let mut p = ClassProfile::default();
        for c in 0..NUM_META_CLASSES {
            p.counts[c] = 1;
        }
        let scene = SyntheticScene::sample(4, 128, &p, Background::Land).unwrap();
        assert_eq!(scene.counts().0, [1; NUM_META_CLASSES]);
        assert_eq!(recount(&scene.render(HERE)), scene.counts());
        let strips: Vec<_> = scene
            .objects()
            .iter()
            .filter(|o| shape_kind(o.class) != ShapeKind::Mark)
            .collect();
        assert_eq!(strips.len(), 12);
        assert!(strips.iter().all(|o| o.col == 0));
        // a crowded small tile drops strips that no longer fit
        let small = SyntheticScene::sample(4, 32, &p, Background::Land).unwrap();
        assert!(small.counts().0.iter().all(|&c| c <= 1));
        assert_eq!(recount(&small.render(HERE)), small.counts());
    }

    #[test]
    fn elements_reproduce_counts_through_default_rules() {
        let mut rng = rng::seeded(5, 0);
        for i in 0..50 {
            let p = sample_profile(&mut rng, &ProfileMix::default());
            let scene = SyntheticScene::sample(i, 64, &p, Background::Land).unwrap();
            let els = scene.elements();
            let parsed = count_meta(&els, &RuleTable::default());
            assert_eq!(parsed, scene.counts());
            assert_eq!(binarize_meta(&parsed), binarize_meta(&scene.counts()));
        }
    }

    proptest! {
        #[test]
        fn recount_matches_ground_truth(seed in any::<u64>(), size in prop::sample::select(alloc::vec![16usize, 32, 64, 66])) {
            let mut rng = rng::seeded(seed, 1);
            let p = sample_profile(&mut rng, &ProfileMix::default());
            let (tile, counts) = generate_synthetic_tile(seed, size, &p, HERE).unwrap();
            prop_assert_eq!(recount(&tile), counts);
            let rotated = crate::corpus::rotate_tile(&tile, (seed % 4) as u8);
            prop_assert_eq!(recount(&rotated), counts);
        }
    }
}
