//! Seeded randomness.
//!
//! Every random choice in the crate comes from a ChaCha stream keyed by a
//! user seed plus a fixed stream id, so independent consumers of one seed do
//! not share state.

use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Stream ids used across the crate.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const AUGMENT: u64 = 4;
    pub const SCENE: u64 = 5;
    pub const PROFILE: u64 = 6;
    pub const FILTER: u64 = 7;
    pub const PAIRS: u64 = 8;
    pub const SAMPLES: u64 = 9;
    pub const BASELINE: u64 = 10;
    pub const POI: u64 = 11;
    pub const PORTS: u64 = 12;
}

pub fn seeded(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fisher-Yates shuffle.
pub fn shuffle<T, R: Rng + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

pub fn permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    shuffle(&mut idx, rng);
    idx
}
