//! A corpus directory: one PPM per tile plus a JSON-lines manifest.

use std::path::Path;

use esle_core::corpus::{Location, TileCorpus, TileRecord};

use super::{ppm, read_jsonl, write_jsonl};
use crate::exec::Pool;
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.jsonl";

pub fn write_corpus(dir: &Path, corpus: &TileCorpus) -> Result<()> {
    for (tile, rec) in corpus.tiles().iter().zip(corpus.manifest()) {
        ppm::write(&dir.join(ppm::tile_file_name(rec.n)), tile)?;
    }
    write_jsonl(&dir.join(MANIFEST), corpus.manifest())
}

pub fn read_manifest(dir: &Path) -> Result<Vec<TileRecord>> {
    let path = dir.join(MANIFEST);
    let records: Vec<TileRecord> = read_jsonl(&path)?;
    if let Some((i, r)) = records.iter().enumerate().find(|(i, r)| r.n != *i) {
        return Err(Error::Invalid(format!(
            "{}: record {i} has n = {}, manifests must be dense",
            path.display(),
            r.n
        )));
    }
    Ok(records)
}

/// Loads every tile listed in the manifest, in manifest order.
pub fn read_corpus(dir: &Path, pool: &Pool) -> Result<TileCorpus> {
    let records = read_manifest(dir)?;
    let tiles = pool.try_map(records.len(), |i| {
        let r = &records[i];
        ppm::read(
            &dir.join(ppm::tile_file_name(r.n)),
            Location::new(r.lat, r.lon)?,
        )
    })?;
    let sources: Vec<_> = records.iter().map(|r| r.source).collect();
    let corpus = TileCorpus::with_sources(tiles, &sources)?;
    if let Some(r) = corpus
        .manifest()
        .iter()
        .zip(&records)
        .find(|(a, b)| a.flat != b.flat)
    {
        return Err(Error::Invalid(format!(
            "{}: tile {} flat flag disagrees with its pixels",
            dir.join(MANIFEST).display(),
            r.1.n
        )));
    }
    Ok(corpus)
}
