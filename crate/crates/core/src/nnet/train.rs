use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use libm::{ceil, floor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::exec::{tree_sum, Executor, Sequential, BLOCK};
use super::loss::cell_loss_from_logit;
use super::network::{backward_sample, forward_sample, ModelParams, NetworkConfig};
use crate::corpus::{rotate_tile, TileImage};
use crate::labels::{MetaLabel, NUM_LABELS};
use crate::metrics::{multilabel_aggregate, Aggregation};
use crate::rng::{self, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Share of the corpus used for training; the rest is held out.
    pub split: f64,
    /// Train on this share of the training split only. Smaller fractions
    /// use a prefix of the same shuffled order, so subsets are nested.
    pub fraction: Option<f64>,
    /// Rotate each training sample by a random multiple of 90 degrees.
    pub rotate: bool,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 20,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            split: 0.7,
            fraction: None,
            rotate: false,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if !open_unit(self.split) {
            return Err(Error::InvalidInput(format!(
                "split {} must lie in (0, 1)",
                self.split
            )));
        }
        if !open_unit(self.threshold) {
            return Err(Error::InvalidInput(format!(
                "threshold {} must lie in (0, 1)",
                self.threshold
            )));
        }
        if let Some(f) = self.fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "fraction {f} must lie in (0, 1]"
                )));
            }
        }
        if !(open_unit(self.beta1) && open_unit(self.beta2) && self.epsilon > 0.0) {
            return Err(Error::InvalidInput(
                "adam betas must lie in (0, 1) and epsilon be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Seeded train/test partition of corpus indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl DataSplit {
    /// The test set depends only on `n`, `split` and `seed`; the training
    /// set is a prefix of the remaining shuffled indices.
    pub fn new(n: usize, split: f64, fraction: Option<f64>, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("empty corpus".into()));
        }
        let mut order = rng::permutation(n, &mut rng::seeded(seed, stream::SPLIT));
        let n_train = if n == 1 {
            1
        } else {
            (floor(split * n as f64) as usize).clamp(1, n - 1)
        };
        let test = order.split_off(n_train);
        let keep = match fraction {
            Some(f) => (ceil(f * n_train as f64 - 1e-9) as usize).clamp(1, n_train),
            None => n_train,
        };
        order.truncate(keep);
        Ok(Self { train: order, test })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
    pub split: DataSplit,
}

/// Probabilities and thresholded bits, both `N x C` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPrediction {
    pub n: usize,
    pub num_labels: usize,
    pub threshold: f64,
    pub probs: Vec<f64>,
    pub bits: Vec<u8>,
}

impl LabelPrediction {
    pub fn probs_of(&self, i: usize) -> &[f64] {
        &self.probs[i * self.num_labels..(i + 1) * self.num_labels]
    }

    pub fn bits_of(&self, i: usize) -> &[u8] {
        &self.bits[i * self.num_labels..(i + 1) * self.num_labels]
    }
}

/// `1` where `p >= threshold`.
pub fn threshold_bits(probs: &[f64], threshold: f64) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p >= threshold)).collect()
}

fn check_tile(config: &NetworkConfig, tile: &TileImage) -> Result<()> {
    let [c, h, w] = config.input;
    if c != 3 || h != tile.size() || w != tile.size() {
        return Err(Error::Shape(format!(
            "tile 3x{s}x{s} does not match network input {c}x{h}x{w}",
            s = tile.size()
        )));
    }
    Ok(())
}

fn normalized(tile: &TileImage) -> Vec<f64> {
    let mut v = Vec::with_capacity(3 * tile.size() * tile.size());
    tile.write_normalized(&mut v);
    v
}

pub fn predict_labels(
    params: &ModelParams,
    tiles: &[TileImage],
    threshold: f64,
) -> Result<LabelPrediction> {
    predict_labels_with(params, tiles, threshold, &Sequential)
}

pub fn predict_labels_with<E: Executor>(
    params: &ModelParams,
    tiles: &[TileImage],
    threshold: f64,
    exec: &E,
) -> Result<LabelPrediction> {
    let cfg = params.config();
    for t in tiles {
        check_tile(cfg, t)?;
    }
    let chunks = exec.map(tiles.len().div_ceil(BLOCK), |b| -> Result<Vec<f64>> {
        let mut probs = Vec::new();
        for tile in &tiles[b * BLOCK..((b + 1) * BLOCK).min(tiles.len())] {
            probs.extend(forward_sample(params, &normalized(tile))?.probs);
        }
        Ok(probs)
    });
    let mut probs = Vec::with_capacity(tiles.len() * cfg.num_labels);
    for c in chunks {
        probs.extend(c?);
    }
    let bits = threshold_bits(&probs, threshold);
    Ok(LabelPrediction {
        n: tiles.len(),
        num_labels: cfg.num_labels,
        threshold,
        probs,
        bits,
    })
}

/// Mean loss and its gradient over a batch given as flat inputs and labels.
///
/// Samples are grouped into blocks of [`BLOCK`]; each block accumulates in
/// sample order and blocks are combined with [`tree_sum`].
pub fn batch_gradient<E: Executor>(
    params: &ModelParams,
    inputs: &[f64],
    labels: &[u8],
    exec: &E,
) -> Result<(f64, Vec<f64>)> {
    let cfg = params.config();
    let (per, c) = (cfg.input_len(), cfg.num_labels);
    let n = inputs.len() / per;
    if n == 0 || inputs.len() != n * per || labels.len() != n * c {
        return Err(Error::Shape(format!(
            "{} input values and {} labels for input size {per} and {c} labels",
            inputs.len(),
            labels.len()
        )));
    }
    let scale = 1.0 / (n * c) as f64;
    let blocks = exec.map(n.div_ceil(BLOCK), |b| -> Result<(f64, Vec<f64>)> {
        let mut grads = vec![0.0; params.len()];
        let mut loss = 0.0;
        for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
            let trace = forward_sample(params, &inputs[i * per..(i + 1) * per])?;
            let y = &labels[i * c..(i + 1) * c];
            let mut g = Vec::with_capacity(c);
            for ((&p, &z), &yv) in trace.probs.iter().zip(&trace.logits).zip(y) {
                loss += cell_loss_from_logit(z, yv);
                g.push((p - f64::from(yv)) * scale);
            }
            backward_sample(params, &trace, &g, &mut grads);
        }
        Ok((loss, grads))
    });
    let mut loss = 0.0;
    let mut parts = Vec::with_capacity(blocks.len());
    for b in blocks {
        let (l, g) = b?;
        loss += l;
        parts.push(g);
    }
    Ok((loss * scale, tree_sum(parts).expect("at least one block")))
}

pub fn train(
    config: &NetworkConfig,
    tiles: &[TileImage],
    labels: &[MetaLabel],
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(config, tiles, labels, tc, &Sequential)
}

/// Trains from a Glorot initialization seeded by `tc.seed`, logging the
/// mean training loss and held-out label metrics after every epoch.
pub fn train_with<E: Executor>(
    config: &NetworkConfig,
    tiles: &[TileImage],
    labels: &[MetaLabel],
    tc: &TrainConfig,
    exec: &E,
) -> Result<TrainOutcome> {
    tc.validate()?;
    if tiles.is_empty() {
        return Err(Error::InvalidInput("empty corpus".into()));
    }
    if tiles.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} tiles but {} labels",
            tiles.len(),
            labels.len()
        )));
    }
    if config.num_labels != NUM_LABELS {
        return Err(Error::Shape(format!(
            "network predicts {} labels, corpus has {NUM_LABELS}",
            config.num_labels
        )));
    }
    for t in tiles {
        check_tile(config, t)?;
    }
    let split = DataSplit::new(tiles.len(), tc.split, tc.fraction, tc.seed)?;
    let mut params = ModelParams::init(config, tc.seed)?;
    let mut adam = AdamState::new(params.len());
    let adam_cfg = tc.adam();
    let mut shuffle_rng = rng::seeded(tc.seed, stream::SHUFFLE);
    let mut augment_rng = rng::seeded(tc.seed, stream::AUGMENT);
    let (eval_idx, eval_labels) = {
        let idx = if split.test.is_empty() {
            &split.train
        } else {
            &split.test
        };
        let bits: Vec<u8> = idx.iter().flat_map(|&i| labels[i].bits()).collect();
        (idx.clone(), bits)
    };
    let eval_tiles: Vec<TileImage> = eval_idx.iter().map(|&i| tiles[i].clone()).collect();

    let mut log = Vec::with_capacity(tc.epochs);
    for epoch in 1..=tc.epochs {
        let mut order = split.train.clone();
        rng::shuffle(&mut order, &mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (bi, batch) in order.chunks(tc.batch_size).enumerate() {
            let diverged = || Error::Diverged { epoch, batch: bi };
            let mut inputs = Vec::with_capacity(batch.len() * config.input_len());
            let mut ys = Vec::with_capacity(batch.len() * NUM_LABELS);
            for &i in batch {
                if tc.rotate {
                    let turns: u8 = augment_rng.random_range(0..4);
                    rotate_tile(&tiles[i], turns).write_normalized(&mut inputs);
                } else {
                    tiles[i].write_normalized(&mut inputs);
                }
                ys.extend(labels[i].bits());
            }
            let (loss, grads) = match batch_gradient(&params, &inputs, &ys, exec) {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) => return Err(diverged()),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(diverged());
            }
            loss_sum += loss * batch.len() as f64;
            adam_step(params.values_mut(), &grads, &mut adam, &adam_cfg);
        }
        let pred = match predict_labels_with(&params, &eval_tiles, tc.threshold, exec) {
            Ok(p) => p,
            Err(Error::NonFinite { .. }) => {
                return Err(Error::Diverged {
                    epoch,
                    batch: order.len().div_ceil(tc.batch_size),
                })
            }
            Err(e) => return Err(e),
        };
        let m = multilabel_aggregate(&pred.bits, &eval_labels, NUM_LABELS, Aggregation::Micro)?;
        log.push(EpochLog {
            epoch,
            loss: loss_sum / order.len() as f64,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            mcc: m.mcc,
        });
    }
    Ok(TrainOutcome { params, log, split })
}
