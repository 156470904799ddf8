//! Seeking new bike share service ports from location embeddings.
//!
//! Existing ports are positives and far-away grid tiles are candidates.
//! Balanced logistic regressions separate the two, and the candidates that
//! score closest to the port class are recommended as new sites.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use libm::sqrt;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{haversine_km, Location};
use crate::labels::MetaLabel;
use crate::metrics::{cosine, entropy_bits, kl_bits, mean_std, BinaryReport, DEFAULT_KL_SMOOTHING};
use crate::nnet::{sigmoid, BaselineMode, StatBaseline};
use crate::rng::{self, stream};
use crate::{Error, Result};

/// Share of each class that goes to training in a split.
pub const TRAIN_SHARE_TENTHS: usize = 7;

/// Flow count above which a port is labeled high flow.
pub const FLOW_THRESHOLD: f64 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortRecord {
    pub location: Location,
    /// Months since the start of the study.
    pub start_month: u32,
    /// Row of the tile covering the port.
    pub tile: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub location: Location,
    pub tile: usize,
    /// Mean hourly count of bikes borrowed plus returned.
    pub hourly_mean: f64,
}

/// Row-major `n x dim` feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Features {
    dim: usize,
    values: Vec<f64>,
}

impl Features {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "{} values in rows of {dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature".into()));
        }
        Ok(Self { dim, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("ragged feature rows".into()));
        }
        Self::new(dim, rows.concat())
    }

    /// Column-wise concatenation of blocks with equal row counts.
    pub fn concat(blocks: &[&Features]) -> Result<Self> {
        let n = blocks.first().map_or(0, |b| b.len());
        if blocks.is_empty() || blocks.iter().any(|b| b.len() != n) {
            return Err(Error::Shape(
                "feature blocks with different row counts".into(),
            ));
        }
        let dim = blocks.iter().map(|b| b.dim).sum();
        let mut values = Vec::with_capacity(n * dim);
        for i in 0..n {
            for b in blocks {
                values.extend_from_slice(b.row(i));
            }
        }
        Ok(Self { dim, values })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    fn check_rows(&self, rows: &[usize]) -> Result<()> {
        match rows.iter().find(|&&r| r >= self.len()) {
            Some(r) => Err(Error::InvalidInput(format!(
                "row {r} of {} feature rows",
                self.len()
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub tiles: Vec<usize>,
}

/// Tiles at least `threshold_km` from every port.
pub fn build_candidate_set(
    tiles: &[Location],
    ports: &[Location],
    threshold_km: f64,
) -> Result<CandidateSet> {
    if !(threshold_km >= 0.0) {
        return Err(Error::Range(format!(
            "distance threshold {threshold_km} km"
        )));
    }
    let tiles = tiles
        .iter()
        .enumerate()
        .filter(|(_, &t)| ports.iter().all(|&p| haversine_km(t, p) >= threshold_km))
        .map(|(i, _)| i)
        .collect();
    Ok(CandidateSet { tiles })
}

/// Linearly interpolated `q` quantile of all pairwise distances in km.
pub fn pairwise_distance_quantile(locations: &[Location], q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Range(format!("quantile {q}")));
    }
    if locations.len() < 2 {
        return Err(Error::InvalidInput(
            "pairwise distances need two locations".into(),
        ));
    }
    let mut d: Vec<f64> = locations
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| locations[i + 1..].iter().map(move |&b| haversine_km(a, b)))
        .collect();
    d.sort_by(f64::total_cmp);
    let pos = q * (d.len() - 1) as f64;
    let lo = pos as usize;
    let hi = (lo + 1).min(d.len() - 1);
    Ok(d[lo] + (pos - lo as f64) * (d[hi] - d[lo]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    /// Coefficient `l2` of the penalty `l2 / 2 * |w|^2`.
    pub l2: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            iterations: 2000,
            l2: 1e-4,
        }
    }
}

/// Logistic regression on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Training column means and standard deviations.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub config: LogRegConfig,
}

impl LogRegModel {
    /// A model whose every prediction is 0.5.
    pub fn zero(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
            config: LogRegConfig::default(),
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let z: f64 = x
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .zip(&self.weights)
            .map(|(((x, m), s), w)| w * (x - m) / s)
            .sum();
        sigmoid(z + self.bias)
    }
}

/// Full-batch gradient descent on the mean cross-entropy of `rows`.
pub fn fit_logreg(
    features: &Features,
    rows: &[usize],
    labels: &[bool],
    config: &LogRegConfig,
) -> Result<LogRegModel> {
    if rows.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} rows, {} labels",
            rows.len(),
            labels.len()
        )));
    }
    if !labels.iter().any(|&y| y) || labels.iter().all(|&y| y) {
        return Err(Error::InvalidInput(
            "logistic regression needs both classes".into(),
        ));
    }
    if !(config.learning_rate > 0.0) || !(config.l2 >= 0.0) {
        return Err(Error::Range(format!(
            "logistic regression config {config:?}"
        )));
    }
    features.check_rows(rows)?;
    let (n, d) = (rows.len(), features.dim());
    let mut mean = vec![0.0; d];
    for &r in rows {
        for (m, x) in mean.iter_mut().zip(features.row(r)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut scale = vec![0.0; d];
    for &r in rows {
        for ((s, x), m) in scale.iter_mut().zip(features.row(r)).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    for s in &mut scale {
        *s = sqrt(*s / n as f64);
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    let x: Vec<f64> = rows
        .iter()
        .flat_map(|&r| {
            features
                .row(r)
                .iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((x, m), s)| (x - m) / s)
        })
        .collect();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut grad = vec![0.0; d];
    for _ in 0..config.iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (xi, &y) in x.chunks_exact(d).zip(labels) {
            let z: f64 = xi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            let r = sigmoid(z) - if y { 1.0 } else { 0.0 };
            for (g, a) in grad.iter_mut().zip(xi) {
                *g += r * a;
            }
            gb += r;
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= config.learning_rate * (g / n as f64 + config.l2 * *wi);
        }
        b -= config.learning_rate * gb / n as f64;
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::Diverged { epoch: 0, batch: 0 });
    }
    Ok(LogRegModel {
        weights: w,
        bias: b,
        mean,
        scale,
        config: *config,
    })
}

/// Train and test rows of one balanced sample, each with its class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancedSample {
    pub train: Vec<(usize, bool)>,
    pub test: Vec<(usize, bool)>,
}

impl BalancedSample {
    pub fn train_rows(&self) -> (Vec<usize>, Vec<bool>) {
        self.train.iter().copied().unzip()
    }

    pub fn test_rows(&self) -> (Vec<usize>, Vec<bool>) {
        self.test.iter().copied().unzip()
    }
}

/// Training count of a class with `n` members.
pub fn train_count(n: usize) -> usize {
    (TRAIN_SHARE_TENTHS * n).div_ceil(10)
}

/// `t` samples, each pairing all positives with as many negatives drawn
/// without replacement, and splitting every class 70/30.
pub fn balanced_samples(
    pos: &[usize],
    neg_pool: &[usize],
    t: usize,
    seed: u64,
) -> Result<Vec<BalancedSample>> {
    if pos.is_empty() {
        return Err(Error::InvalidInput("no positives to balance".into()));
    }
    if neg_pool.len() < pos.len() {
        return Err(Error::InvalidInput(format!(
            "{} negatives cannot balance {} positives",
            neg_pool.len(),
            pos.len()
        )));
    }
    let mut rng = rng::seeded(seed, stream::PORTS);
    let k = train_count(pos.len());
    let mut samples = Vec::with_capacity(t);
    for _ in 0..t {
        let mut p = pos.to_vec();
        let mut n = neg_pool.to_vec();
        rng::shuffle(&mut p, &mut rng);
        rng::shuffle(&mut n, &mut rng);
        n.truncate(pos.len());
        let tag = |rows: &[usize], y: bool| rows.iter().map(move |&r| (r, y)).collect::<Vec<_>>();
        let mut train = tag(&p[..k], true);
        train.extend(tag(&n[..k], false));
        let mut test = tag(&p[k..], true);
        test.extend(tag(&n[k..], false));
        samples.push(BalancedSample { train, test });
    }
    Ok(samples)
}

fn evaluate_model(
    model: &LogRegModel,
    features: &Features,
    rows: &[(usize, bool)],
) -> Result<BinaryReport> {
    let scores: Vec<f64> = rows
        .iter()
        .map(|&(r, _)| model.predict_proba(features.row(r)))
        .collect();
    let preds: Vec<bool> = scores.iter().map(|&s| s >= 0.5).collect();
    let truth: Vec<bool> = rows.iter().map(|&(_, y)| y).collect();
    BinaryReport::evaluate(&scores, &preds, &truth)
}

/// Mean and standard deviation of each metric across samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: BinaryReport,
    pub std: BinaryReport,
}

impl MetricSummary {
    pub fn of(reports: &[BinaryReport]) -> Self {
        let mut mean = [0.0; 6];
        let mut std = [0.0; 6];
        for k in 0..6 {
            let column: Vec<f64> = reports.iter().map(|r| r.as_array()[k]).collect();
            (mean[k], std[k]) = mean_std(&column);
        }
        Self {
            mean: BinaryReport::from_array(mean),
            std: BinaryReport::from_array(std),
        }
    }
}

/// Fits one model per balanced sample and scores it on the held-out part.
pub fn identify(
    features: &Features,
    pos: &[usize],
    neg_pool: &[usize],
    t: usize,
    config: &LogRegConfig,
    seed: u64,
) -> Result<(Vec<LogRegModel>, MetricSummary)> {
    features.check_rows(pos)?;
    features.check_rows(neg_pool)?;
    let mut models = Vec::with_capacity(t);
    let mut reports = Vec::with_capacity(t);
    for sample in balanced_samples(pos, neg_pool, t, seed)? {
        let (rows, labels) = sample.train_rows();
        let model = fit_logreg(features, &rows, &labels, config)?;
        reports.push(evaluate_model(&model, features, &sample.test)?);
        models.push(model);
    }
    Ok((models, MetricSummary::of(&reports)))
}

/// Mean and standard deviation of the scores of all `rows` under all models.
pub fn score_future_ports(
    models: &[LogRegModel],
    features: &Features,
    rows: &[usize],
) -> Result<(f64, f64)> {
    if models.is_empty() {
        return Err(Error::InvalidInput("no models to score with".into()));
    }
    features.check_rows(rows)?;
    let scores: Vec<f64> = models
        .iter()
        .flat_map(|m| rows.iter().map(move |&r| m.predict_proba(features.row(r))))
        .collect();
    Ok(mean_std(&scores))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthResult {
    pub month: u32,
    /// Ports operating by this month.
    pub positives: usize,
    pub metrics: MetricSummary,
    /// Scores of ports opened after this month, when there are any.
    pub future_score: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentificationSeries {
    pub months: Vec<MonthResult>,
    /// Months with fewer than two operating ports.
    pub skipped: Vec<u32>,
}

/// Identification run on the ports operating by each distinct start month.
pub fn temporal_identification(
    ports: &[PortRecord],
    candidates: &[usize],
    features: &Features,
    t: usize,
    config: &LogRegConfig,
    seed: u64,
) -> Result<IdentificationSeries> {
    if t == 0 {
        return Err(Error::InvalidInput(
            "at least one sample per month is needed".into(),
        ));
    }
    let mut months: Vec<u32> = ports.iter().map(|p| p.start_month).collect();
    months.sort_unstable();
    months.dedup();
    let mut series = IdentificationSeries::default();
    for month in months {
        let pos: Vec<usize> = ports
            .iter()
            .filter(|p| p.start_month <= month)
            .map(|p| p.tile)
            .collect();
        if pos.len() < 2 {
            series.skipped.push(month);
            continue;
        }
        let future: Vec<usize> = ports
            .iter()
            .filter(|p| p.start_month > month)
            .map(|p| p.tile)
            .collect();
        let (models, metrics) = identify(features, &pos, candidates, t, config, seed)?;
        let future_score = if future.is_empty() {
            None
        } else {
            Some(score_future_ports(&models, features, &future)?)
        };
        series.months.push(MonthResult {
            month,
            positives: pos.len(),
            metrics,
            future_score,
        });
    }
    Ok(series)
}

/// Which feature blocks a recommendation configuration concatenates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSelector {
    pub metadata: bool,
    pub meta_label: bool,
    pub poi: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecConfig {
    pub name: String,
    /// Embedding dimension of the model whose vectors are used.
    pub embedding_dim: usize,
    #[serde(default)]
    pub features: FeatureSelector,
    pub list_len: usize,
    #[serde(default)]
    pub logreg: LogRegConfig,
}

impl RecConfig {
    /// Embeddings of width `large` and `small`, each alone and with the
    /// metadata and meta label blocks appended.
    pub fn four_way(large: usize, small: usize, list_len: usize) -> Vec<Self> {
        let extra = FeatureSelector {
            metadata: true,
            meta_label: true,
            poi: false,
        };
        [
            (large, FeatureSelector::default()),
            (large, extra),
            (small, FeatureSelector::default()),
            (small, extra),
        ]
        .into_iter()
        .map(|(e, f)| {
            let suffix = if f.metadata { "+meta" } else { "" };
            Self {
                name: format!("E{e}{suffix}"),
                embedding_dim: e,
                features: f,
                list_len,
                logreg: LogRegConfig::default(),
            }
        })
        .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    /// 1-based position in the list.
    pub rank: usize,
    pub tile: usize,
    pub score: f64,
}

/// Mean score of every candidate under `t` classifiers, each trained on
/// all ports against as many candidates drawn without replacement.
pub fn candidate_scores(
    features: &Features,
    ports: &[usize],
    candidates: &[usize],
    t: usize,
    config: &LogRegConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    if candidates.is_empty() || t == 0 {
        return Err(Error::InvalidInput(
            "recommendation needs candidates and models".into(),
        ));
    }
    features.check_rows(ports)?;
    features.check_rows(candidates)?;
    let mut totals = vec![0.0; candidates.len()];
    for sample in balanced_samples(ports, candidates, t, seed)? {
        let (rows, labels): (Vec<usize>, Vec<bool>) =
            sample.train.iter().chain(&sample.test).copied().unzip();
        let model = fit_logreg(features, &rows, &labels, config)?;
        for (total, &c) in totals.iter_mut().zip(candidates) {
            *total += model.predict_proba(features.row(c));
        }
    }
    Ok(totals.into_iter().map(|s| s / t as f64).collect())
}

/// Top `m` candidates by score, ties to the lower tile index.
pub fn rank_candidates(
    candidates: &[usize],
    scores: &[f64],
    m: usize,
) -> Result<Vec<Recommendation>> {
    if candidates.len() != scores.len() {
        return Err(Error::Shape(format!(
            "{} candidates, {} scores",
            candidates.len(),
            scores.len()
        )));
    }
    if m == 0 || m > candidates.len() {
        return Err(Error::Range(format!(
            "list length {m} of {} candidates",
            candidates.len()
        )));
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(candidates[a].cmp(&candidates[b]))
    });
    Ok(order
        .into_iter()
        .take(m)
        .enumerate()
        .map(|(i, j)| Recommendation {
            rank: i + 1,
            tile: candidates[j],
            score: scores[j],
        })
        .collect())
}

pub fn recommend_top_m(
    features: &Features,
    ports: &[usize],
    candidates: &[usize],
    t: usize,
    m: usize,
    config: &LogRegConfig,
    seed: u64,
) -> Result<Vec<Recommendation>> {
    let scores = candidate_scores(features, ports, candidates, t, config, seed)?;
    rank_candidates(candidates, &scores, m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharedPick {
    pub tile: usize,
    pub mean_rank: f64,
}

/// Tiles present in every list, by mean rank then tile index.
pub fn intersect_recommendations(lists: &[Vec<Recommendation>]) -> Result<Vec<SharedPick>> {
    if lists.is_empty() {
        return Err(Error::InvalidInput("nothing to intersect".into()));
    }
    let mut ranks: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for list in lists {
        let mut seen = BTreeMap::new();
        for r in list {
            seen.entry(r.tile).or_insert(r.rank);
        }
        for (tile, rank) in seen {
            ranks.entry(tile).or_default().push(rank);
        }
    }
    let mut picks: Vec<SharedPick> = ranks
        .into_iter()
        .filter(|(_, r)| r.len() == lists.len())
        .map(|(tile, r)| SharedPick {
            tile,
            mean_rank: r.iter().sum::<usize>() as f64 / r.len() as f64,
        })
        .collect();
    picks.sort_by(|a, b| {
        a.mean_rank
            .total_cmp(&b.mean_rank)
            .then(a.tile.cmp(&b.tile))
    });
    Ok(picks)
}

/// Element-wise mean of POI count vectors.
pub fn poi_count_means(vectors: &[&[u32]]) -> Result<Vec<f64>> {
    let Some(first) = vectors.first() else {
        return Err(Error::InvalidInput("no POI vectors to average".into()));
    };
    if vectors.iter().any(|v| v.len() != first.len()) {
        return Err(Error::Shape("POI vectors of different lengths".into()));
    }
    let mut mean = vec![0.0; first.len()];
    for v in vectors {
        for (m, &c) in mean.iter_mut().zip(v.iter()) {
            *m += f64::from(c);
        }
    }
    mean.iter_mut().for_each(|m| *m /= vectors.len() as f64);
    Ok(mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoiReport {
    pub cosine: f64,
    pub entropy_ref: f64,
    pub entropy_rec: f64,
    pub kl_ref_rec: f64,
    pub kl_rec_ref: f64,
}

fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidInput(
            "POI means must be finite and non-negative".into(),
        ));
    }
    let total: f64 = v.iter().sum();
    if total == 0.0 {
        return Err(Error::InvalidInput("all-zero POI mean vector".into()));
    }
    Ok(v.iter().map(|x| x / total).collect())
}

/// Similarity of reference and recommended POI profiles.
pub fn evaluate_recommendation(v_ref: &[f64], v_rec: &[f64]) -> Result<PoiReport> {
    if v_ref.len() != v_rec.len() {
        return Err(Error::Shape(format!(
            "POI vectors of length {} and {}",
            v_ref.len(),
            v_rec.len()
        )));
    }
    let (p, q) = (normalize(v_ref)?, normalize(v_rec)?);
    Ok(PoiReport {
        cosine: cosine(v_ref, v_rec)?,
        entropy_ref: entropy_bits(&p)?,
        entropy_rec: entropy_bits(&q)?,
        kl_ref_rec: kl_bits(&p, &q, DEFAULT_KL_SMOOTHING)?,
        kl_rec_ref: kl_bits(&q, &p, DEFAULT_KL_SMOOTHING)?,
    })
}

/// High flow iff the mean exceeds `threshold`.
pub fn flow_labels(hourly_means: &[f64], threshold: f64) -> Vec<bool> {
    hourly_means.iter().map(|&m| m > threshold).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    /// One report per named feature set.
    pub modes: Vec<(String, BinaryReport)>,
    pub majority: BinaryReport,
    pub bernoulli: BinaryReport,
    pub train_size: usize,
    pub test_size: usize,
}

/// Stratified 70/30 split of the rows `0..labels.len()`.
pub fn stratified_split(labels: &[bool], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = rng::seeded(seed, stream::SPLIT);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [true, false] {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rng::shuffle(&mut rows, &mut rng);
        let k = train_count(rows.len());
        train.extend_from_slice(&rows[..k]);
        test.extend_from_slice(&rows[k..]);
    }
    (train, test)
}

/// Flow classification per feature set, next to statistical baselines.
pub fn flow_prediction(
    modes: &[(String, Features)],
    labels: &[bool],
    config: &LogRegConfig,
    seed: u64,
) -> Result<FlowReport> {
    if !labels.iter().any(|&y| y) || labels.iter().all(|&y| y) {
        return Err(Error::InvalidInput("flow labels need both classes".into()));
    }
    if modes.iter().any(|(_, f)| f.len() != labels.len()) {
        return Err(Error::Shape("feature rows do not match flow labels".into()));
    }
    let (train, test) = stratified_split(labels, seed);
    let train_y: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
    let test_y: Vec<bool> = test.iter().map(|&i| labels[i]).collect();
    let tagged: Vec<(usize, bool)> = test.iter().copied().zip(test_y.iter().copied()).collect();
    let mut reports = Vec::with_capacity(modes.len());
    for (name, features) in modes {
        let model = fit_logreg(features, &train, &train_y, config)?;
        reports.push((name.clone(), evaluate_model(&model, features, &tagged)?));
    }
    let bits: Vec<u8> = train_y.iter().map(|&y| u8::from(y)).collect();
    let stat = StatBaseline::fit(&bits, 1)?;
    let scores = stat.scores(test.len());
    let baseline = |mode: BaselineMode| -> Result<BinaryReport> {
        let preds: Vec<bool> = stat
            .predict(test.len(), mode, seed)
            .iter()
            .map(|&b| b == 1)
            .collect();
        BinaryReport::evaluate(&scores, &preds, &test_y)
    };
    Ok(FlowReport {
        modes: reports,
        majority: baseline(BaselineMode::Majority)?,
        bernoulli: baseline(BaselineMode::Bernoulli)?,
        train_size: train.len(),
        test_size: test.len(),
    })
}

/// Synthetic ports on up to `count` tiles whose labels carry every bit of
/// `profile`, opened at uniform random months in `0..horizon_months`.
/// Records are ordered by opening month, then tile.
pub fn plant_ports(
    labels: &[MetaLabel],
    locations: &[Location],
    profile: u32,
    count: usize,
    horizon_months: u32,
    seed: u64,
) -> Result<Vec<PortRecord>> {
    if labels.len() != locations.len() {
        return Err(Error::Shape(format!(
            "{} labels, {} locations",
            labels.len(),
            locations.len()
        )));
    }
    if horizon_months == 0 {
        return Err(Error::InvalidInput(
            "port horizon must be at least one month".into(),
        ));
    }
    let mut eligible: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i].0 & profile == profile)
        .collect();
    let mut rng = rng::seeded(seed, stream::PORTS);
    rng::shuffle(&mut eligible, &mut rng);
    eligible.truncate(count);
    eligible.sort_unstable();
    let mut ports: Vec<PortRecord> = eligible
        .into_iter()
        .map(|tile| PortRecord {
            location: locations[tile],
            start_month: rng.random_range(0..horizon_months),
            tile,
        })
        .collect();
    ports.sort_by_key(|p| (p.start_month, p.tile));
    Ok(ports)
}

/// Synthetic hourly flows: `base + lift` when the port tile carries any bit
/// of `busy`, `base` otherwise, plus uniform noise in `[-noise, noise]`,
/// floored at zero.
pub fn plant_flows(
    ports: &[PortRecord],
    labels: &[MetaLabel],
    busy: u32,
    (base, lift, noise): (f64, f64, f64),
    seed: u64,
) -> Result<Vec<FlowRecord>> {
    if let Some(p) = ports.iter().find(|p| p.tile >= labels.len()) {
        return Err(Error::Range(format!(
            "port tile {} of {} labels",
            p.tile,
            labels.len()
        )));
    }
    let mut rng = rng::seeded(seed, stream::PORTS + 0x100);
    Ok(ports
        .iter()
        .map(|p| {
            let level = if labels[p.tile].0 & busy != 0 {
                base + lift
            } else {
                base
            };
            let jitter = noise * (2.0 * rng.random::<f64>() - 1.0);
            FlowRecord {
                location: p.location,
                tile: p.tile,
                hourly_mean: (level + jitter).max(0.0),
            }
        })
        .collect())
}
