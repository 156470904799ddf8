//! Embedding vectors, the embedding matrix and cosine retrieval.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

use crate::corpus::{Location, TileCorpus, TileImage};
use crate::metrics::{cosine, norm};
use crate::nnet::{Executor, ModelParams, Sequential, BLOCK};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub location: Option<Location>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, location: Option<Location>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "embedding has a non-finite value".into(),
            ));
        }
        Ok(Self { values, location })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Which tile a matrix row came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub row: usize,
    pub n: usize,
    pub lat: f64,
    pub lon: f64,
}

impl ManifestRow {
    pub fn location(&self) -> Location {
        Location {
            lat: self.lat,
            lon: self.lon,
        }
    }
}

/// `N x E` row-major embeddings with one manifest entry per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    values: Vec<f64>,
    manifest: Vec<ManifestRow>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, values: Vec<f64>, manifest: Vec<ManifestRow>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("embedding dimension must be positive".into()));
        }
        if values.len() != dim * manifest.len() {
            return Err(Error::Shape(format!(
                "{} values for {} rows of dimension {dim}",
                values.len(),
                manifest.len()
            )));
        }
        if let Some((i, m)) = manifest.iter().enumerate().find(|(i, m)| m.row != *i) {
            return Err(Error::InvalidInput(format!(
                "manifest entry {i} names row {}",
                m.row
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "embedding matrix has a non-finite value".into(),
            ));
        }
        Ok(Self {
            dim,
            values,
            manifest,
        })
    }

    pub fn len(&self) -> usize {
        self.manifest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn manifest(&self) -> &[ManifestRow] {
        &self.manifest
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn vector(&self, i: usize) -> EmbeddingVector {
        EmbeddingVector {
            values: self.row(i).to_vec(),
            location: Some(self.manifest[i].location()),
        }
    }
}

/// The embedding-layer activation for one tile.
pub fn extract_embedding(params: &ModelParams, tile: &TileImage) -> Result<EmbeddingVector> {
    let m = embed_tiles(params, core::slice::from_ref(tile), &Sequential)?;
    Ok(EmbeddingVector {
        values: m,
        location: Some(tile.location),
    })
}

fn embed_tiles<E: Executor>(
    params: &ModelParams,
    tiles: &[TileImage],
    exec: &E,
) -> Result<Vec<f64>> {
    let [c, h, w] = params.config().input;
    if let Some(t) = tiles
        .iter()
        .find(|t| c != 3 || t.size() != h || t.size() != w)
    {
        return Err(Error::Shape(format!(
            "tile 3x{s}x{s} does not match network input {c}x{h}x{w}",
            s = t.size()
        )));
    }
    let chunks = exec.map(tiles.len().div_ceil(BLOCK), |b| -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for tile in &tiles[b * BLOCK..((b + 1) * BLOCK).min(tiles.len())] {
            let mut x = Vec::with_capacity(c * h * w);
            tile.write_normalized(&mut x);
            out.extend(crate::nnet::embed_input(params, &x)?);
        }
        Ok(out)
    });
    let mut values = Vec::with_capacity(tiles.len() * params.config().embedding_dim);
    for c in chunks {
        values.extend(c?);
    }
    Ok(values)
}

pub fn embed_corpus(params: &ModelParams, corpus: &TileCorpus) -> Result<EmbeddingMatrix> {
    embed_corpus_with(params, corpus, &Sequential)
}

/// Row `i` is the embedding of corpus tile `i`.
pub fn embed_corpus_with<E: Executor>(
    params: &ModelParams,
    corpus: &TileCorpus,
    exec: &E,
) -> Result<EmbeddingMatrix> {
    if corpus.is_empty() {
        return Err(Error::InvalidInput("empty corpus".into()));
    }
    let values = embed_tiles(params, corpus.tiles(), exec)?;
    let manifest = corpus
        .manifest()
        .iter()
        .enumerate()
        .map(|(row, r)| ManifestRow {
            row,
            n: r.n,
            lat: r.lat,
            lon: r.lon,
        })
        .collect();
    EmbeddingMatrix::new(params.config().embedding_dim, values, manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbors {
    /// `(row, cosine)` in descending score order.
    pub hits: Vec<(usize, f64)>,
    /// Set when fewer than `k` rows exist.
    pub truncated: bool,
}

/// Exact full-scan cosine retrieval; ties go to the lower row index.
/// Stored all-zero rows score 0.
pub fn nearest_neighbors(matrix: &EmbeddingMatrix, query: &[f64], k: usize) -> Result<Neighbors> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if query.len() != matrix.dim() {
        return Err(Error::Shape(format!(
            "query of dimension {} against matrix of dimension {}",
            query.len(),
            matrix.dim()
        )));
    }
    if norm(query) == 0.0 {
        return Err(Error::InvalidInput("zero query vector".into()));
    }
    let mut hits: Vec<(usize, f64)> = matrix
        .rows()
        .enumerate()
        .map(|(i, row)| (i, cosine(query, row).unwrap_or(0.0)))
        .collect();
    hits.sort_by(
        |a, b| match b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal) {
            Ordering::Equal => a.0.cmp(&b.0),
            o => o,
        },
    );
    let truncated = k > hits.len();
    hits.truncate(k);
    Ok(Neighbors { hits, truncated })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComposeOp {
    Add,
    Sub,
}

/// Element-wise `a + b` or `a - b`; the result has no location.
pub fn compose(a: &EmbeddingVector, op: ComposeOp, b: &EmbeddingVector) -> Result<EmbeddingVector> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "cannot compose dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| match op {
            ComposeOp::Add => x + y,
            ComposeOp::Sub => x - y,
        })
        .collect();
    Ok(EmbeddingVector {
        values,
        location: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn matrix(rows: &[&[f64]]) -> EmbeddingMatrix {
        let dim = rows[0].len();
        let manifest = (0..rows.len())
            .map(|i| ManifestRow {
                row: i,
                n: i,
                lat: 0.0,
                lon: i as f64,
            })
            .collect();
        EmbeddingMatrix::new(dim, rows.concat(), manifest).unwrap()
    }

    #[test]
    fn query_equal_to_row_ranks_first() {
        let m = matrix(&[&[1.0, 0.0], &[0.3, 2.0], &[-1.0, 1.0]]);
        let nn = nearest_neighbors(&m, &[0.3, 2.0], 1).unwrap();
        assert_eq!(nn.hits[0].0, 1);
        assert!((nn.hits[0].1 - 1.0).abs() < 1e-12);
        assert!(!nn.truncated);
    }

    #[test]
    fn ties_prefer_lower_rows_and_k_beyond_n_is_flagged() {
        let m = matrix(&[&[1.0, 1.0], &[2.0, 2.0], &[1.0, 0.0], &[0.5, 0.5]]);
        let nn = nearest_neighbors(&m, &[1.0, 1.0], 10).unwrap();
        let order: Vec<usize> = nn.hits.iter().map(|h| h.0).collect();
        assert_eq!(order, [0, 1, 3, 2]);
        assert!(nn.truncated);
        assert!(nn.hits.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn retrieval_errors() {
        let m = matrix(&[&[1.0, 0.0]]);
        assert!(nearest_neighbors(&m, &[0.0, 0.0], 1).is_err());
        assert!(nearest_neighbors(&m, &[1.0], 1).is_err());
        assert!(nearest_neighbors(&m, &[1.0, 0.0], 0).is_err());
    }

    #[test]
    fn compose_identities() {
        let a = EmbeddingVector::new(
            vec![0.125, -2.5, 3.0],
            Some(Location { lat: 1.0, lon: 2.0 }),
        )
        .unwrap();
        let b = EmbeddingVector::new(vec![0.7, 0.25, -1.0], None).unwrap();
        let zero = EmbeddingVector::new(vec![0.0; 3], None).unwrap();
        assert_eq!(compose(&a, ComposeOp::Sub, &a).unwrap().values, [0.0; 3]);
        let plus0 = compose(&a, ComposeOp::Add, &zero).unwrap();
        assert_eq!(
            (plus0.values.as_slice(), plus0.location),
            (a.values.as_slice(), None)
        );
        let back = compose(
            &compose(&a, ComposeOp::Add, &b).unwrap(),
            ComposeOp::Sub,
            &b,
        )
        .unwrap();
        assert_eq!(back.values, a.values);
        assert!(compose(
            &a,
            ComposeOp::Add,
            &EmbeddingVector::new(vec![1.0], None).unwrap()
        )
        .is_err());
    }

    #[test]
    fn matrix_validation() {
        assert!(EmbeddingMatrix::new(2, vec![1.0], vec![]).is_err());
        assert!(EmbeddingMatrix::new(0, vec![], vec![]).is_err());
        let bad_row = vec![ManifestRow {
            row: 3,
            n: 0,
            lat: 0.0,
            lon: 0.0,
        }];
        assert!(EmbeddingMatrix::new(1, vec![1.0], bad_row).is_err());
        assert!(EmbeddingMatrix::new(4, vec![], vec![]).unwrap().is_empty());
    }
}
