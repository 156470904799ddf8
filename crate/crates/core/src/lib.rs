//! Semantic location embeddings learned from map tiles.
//!
//! A small multi-label CNN is trained to predict OpenStreetMap-derived meta
//! labels from map-tile rasters. The activation feeding its last layer is the
//! location embedding. The remaining modules use those embeddings: nearest
//! neighbour retrieval, class feature analysis, and seeking new service ports
//! for a bike share network.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, JSON parsing
//! and the command line live in the companion `esle` crate.
#![no_std]

extern crate alloc;

pub mod analysis;
pub mod corpus;
pub mod embed;
mod error;
pub mod labels;
pub mod metrics;
pub mod nnet;
pub mod portseek;
pub mod rng;

pub use error::{Error, Result};
