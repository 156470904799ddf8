use alloc::format;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{self, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMode {
    /// Draw each bit with probability equal to the training mean.
    Bernoulli,
    /// Predict 1 iff the training mean is at least one half.
    Majority,
}

/// Per-label predictor built from training-label means alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatBaseline {
    pub means: Vec<f64>,
}

impl StatBaseline {
    /// `labels` holds `N x num_labels` bits row-major.
    pub fn fit(labels: &[u8], num_labels: usize) -> Result<Self> {
        if num_labels == 0 || labels.is_empty() || labels.len() % num_labels != 0 {
            return Err(Error::InvalidInput(format!(
                "{} label bits cannot form rows of {num_labels}",
                labels.len()
            )));
        }
        let n = labels.len() / num_labels;
        let mut sums = alloc::vec![0u64; num_labels];
        for row in labels.chunks_exact(num_labels) {
            for (s, &b) in sums.iter_mut().zip(row) {
                *s += u64::from(b != 0);
            }
        }
        Ok(Self {
            means: sums.into_iter().map(|s| s as f64 / n as f64).collect(),
        })
    }

    pub fn num_labels(&self) -> usize {
        self.means.len()
    }

    /// Bits for `n` samples, row-major; `seed` only matters in Bernoulli mode.
    pub fn predict(&self, n: usize, mode: BaselineMode, seed: u64) -> Vec<u8> {
        match mode {
            BaselineMode::Majority => (0..n)
                .flat_map(|_| self.means.iter().map(|&m| u8::from(m >= 0.5)))
                .collect(),
            BaselineMode::Bernoulli => {
                let mut rng = rng::seeded(seed, stream::BASELINE);
                let mut out = Vec::with_capacity(n * self.means.len());
                for _ in 0..n {
                    for &m in &self.means {
                        out.push(u8::from(rng.random::<f64>() < m));
                    }
                }
                out
            }
        }
    }

    /// Constant per-label scores, for rank metrics.
    pub fn scores(&self, n: usize) -> Vec<f64> {
        (0..n).flat_map(|_| self.means.iter().copied()).collect()
    }
}
