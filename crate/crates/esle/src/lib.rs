//! File formats, Overpass parsing, checkpoints and the command-line
//! pipeline around `esle-core`.

pub mod cli;
pub mod config;
mod error;
pub mod exec;
pub mod formats;
pub mod pipeline;

pub use error::{Error, Result};
