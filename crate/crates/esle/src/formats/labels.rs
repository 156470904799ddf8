//! The labels file: one JSON line per tile with meta counts, the 18 label
//! bits and the POI vector. The POI vocabulary is stored next to it.

use std::path::{Path, PathBuf};

use esle_core::labels::{binarize_meta, MetaCounts, MetaLabel, PoiVector, PoiVocabulary};
use serde::{Deserialize, Serialize};

use super::{read_json, read_jsonl, write_json, write_jsonl};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub n: usize,
    pub counts: MetaCounts,
    pub label: Vec<u8>,
    pub poi: Vec<u32>,
}

impl LabelRecord {
    pub fn new(n: usize, counts: MetaCounts, poi: PoiVector) -> Self {
        Self {
            n,
            counts,
            label: binarize_meta(&counts).bits().to_vec(),
            poi: poi.0,
        }
    }

    pub fn meta_label(&self) -> Result<MetaLabel> {
        Ok(MetaLabel::from_bits(&self.label)?)
    }
}

/// Labels file plus vocabulary, as written by the `label` stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub records: Vec<LabelRecord>,
    pub vocabulary: PoiVocabulary,
}

impl LabelSet {
    pub fn labels(&self) -> Result<Vec<MetaLabel>> {
        self.records.iter().map(LabelRecord::meta_label).collect()
    }

    pub fn counts(&self) -> Vec<MetaCounts> {
        self.records.iter().map(|r| r.counts).collect()
    }

    pub fn poi(&self) -> Vec<&[u32]> {
        self.records.iter().map(|r| r.poi.as_slice()).collect()
    }
}

pub fn vocabulary_path(labels: &Path) -> PathBuf {
    let mut s = labels.as_os_str().to_owned();
    s.push(".vocab.json");
    PathBuf::from(s)
}

pub fn write_labels(path: &Path, set: &LabelSet) -> Result<()> {
    write_jsonl(path, &set.records)?;
    write_json(&vocabulary_path(path), &set.vocabulary)
}

/// Reads and checks a labels file: dense `n`, label bits that agree with
/// the counts, and POI vectors as long as the vocabulary.
pub fn read_labels(path: &Path) -> Result<LabelSet> {
    let records: Vec<LabelRecord> = read_jsonl(path)?;
    let vocabulary: PoiVocabulary = read_json(&vocabulary_path(path))?;
    let bad =
        |i: usize, what: String| Error::Invalid(format!("{}: record {i}: {what}", path.display()));
    for (i, r) in records.iter().enumerate() {
        if r.n != i {
            return Err(bad(i, format!("n = {}, labels must be dense", r.n)));
        }
        let label = r.meta_label().map_err(|e| bad(i, e.to_string()))?;
        if label != binarize_meta(&r.counts) {
            return Err(bad(i, "label bits disagree with counts".into()));
        }
        if r.poi.len() != vocabulary.len() {
            return Err(bad(
                i,
                format!(
                    "{} POI counts for a vocabulary of {}",
                    r.poi.len(),
                    vocabulary.len()
                ),
            ));
        }
    }
    Ok(LabelSet {
        records,
        vocabulary,
    })
}
