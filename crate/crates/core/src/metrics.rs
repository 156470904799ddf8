//! Binary classification metrics and information measures.
//!
//! Zero denominators yield 0 for precision, recall, F1 and MCC.

use alloc::format;
use alloc::vec::Vec;
use libm::{log2, sqrt};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (bool, bool)>,
    {
        let mut cc = Self::default();
        for (pred, truth) in pairs {
            cc.record(pred, truth);
        }
        cc
    }

    pub fn record(&mut self, pred: bool, truth: bool) {
        match (pred, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn precision_recall_f1(cc: &ConfusionCounts) -> (f64, f64, f64) {
    let p = ratio(cc.tp, cc.tp + cc.fp);
    let r = ratio(cc.tp, cc.tp + cc.fn_);
    let f1 = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    (p, r, f1)
}

pub fn mcc(cc: &ConfusionCounts) -> f64 {
    let (tp, fp, tn, fn_) = (cc.tp as f64, cc.fp as f64, cc.tn as f64, cc.fn_ as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if den == 0.0 {
        return 0.0;
    }
    ((tp * tn - fp * fn_) / sqrt(den)).clamp(-1.0, 1.0)
}

/// Area under the ROC curve via average ranks; tied scores count one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores, {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("ROC-AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; a tie block shares its mean rank
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += mean_rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

fn check_distribution(p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.is_empty() || p.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "not a probability vector (sum {sum})"
        )));
    }
    Ok(())
}

/// Shannon entropy in bits.
pub fn entropy_bits(p: &[f64]) -> Result<f64> {
    check_distribution(p)?;
    Ok(-p
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * log2(v))
        .sum::<f64>())
}

/// Adds `eps` to every entry and renormalizes.
pub fn smooth(p: &[f64], eps: f64) -> Vec<f64> {
    let total: f64 = p.iter().map(|v| v + eps).sum();
    p.iter().map(|v| (v + eps) / total).collect()
}

pub const DEFAULT_KL_SMOOTHING: f64 = 1e-9;

/// Relative entropy `D(p || q)` in bits, after smoothing both sides.
pub fn kl_bits(p: &[f64], q: &[f64], eps: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    check_distribution(p)?;
    check_distribution(q)?;
    let (p, q) = (smooth(p, eps), smooth(q, eps));
    let mut d = 0.0;
    for (&pi, &qi) in p.iter().zip(&q) {
        if pi > 0.0 {
            if qi == 0.0 {
                return Err(Error::UndefinedMetric("q has no mass where p does".into()));
            }
            d += pi * log2(pi / qi);
        }
    }
    Ok(d.max(0.0))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidInput("cosine of a zero vector".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Pool all cells into one confusion matrix.
    #[default]
    Micro,
    /// Average the per-label metrics.
    Macro,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
}

impl LabelMetrics {
    pub fn from_confusion(cc: &ConfusionCounts) -> Self {
        let (precision, recall, f1) = precision_recall_f1(cc);
        Self {
            precision,
            recall,
            f1,
            mcc: mcc(cc),
        }
    }
}

/// Metrics over `n x labels` row-major bit matrices.
pub fn multilabel_aggregate(
    preds: &[u8],
    truth: &[u8],
    labels: usize,
    mode: Aggregation,
) -> Result<LabelMetrics> {
    if preds.len() != truth.len() || labels == 0 || preds.len() % labels != 0 {
        return Err(Error::Shape(format!(
            "predictions {} vs truth {} cells with {labels} labels",
            preds.len(),
            truth.len()
        )));
    }
    Ok(match mode {
        Aggregation::Micro => LabelMetrics::from_confusion(&ConfusionCounts::from_pairs(
            preds.iter().zip(truth).map(|(&p, &t)| (p == 1, t == 1)),
        )),
        Aggregation::Macro => {
            let mut sum = LabelMetrics::default();
            for c in 0..labels {
                let cc = ConfusionCounts::from_pairs(
                    preds
                        .iter()
                        .skip(c)
                        .step_by(labels)
                        .zip(truth.iter().skip(c).step_by(labels))
                        .map(|(&p, &t)| (p == 1, t == 1)),
                );
                let m = LabelMetrics::from_confusion(&cc);
                sum.precision += m.precision;
                sum.recall += m.recall;
                sum.f1 += m.f1;
                sum.mcc += m.mcc;
            }
            let k = labels as f64;
            LabelMetrics {
                precision: sum.precision / k,
                recall: sum.recall / k,
                f1: sum.f1 / k,
                mcc: sum.mcc / k,
            }
        }
    })
}

/// Accuracy, F1, ROC-AUC and MCC of a scored binary classifier.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BinaryReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub mcc: f64,
}

impl BinaryReport {
    /// `preds` are hard decisions, `scores` rank the samples for the AUC.
    /// The AUC is 0.5 when the truth holds a single class.
    pub fn evaluate(scores: &[f64], preds: &[bool], truth: &[bool]) -> Result<Self> {
        if preds.len() != truth.len() {
            return Err(Error::Shape(format!(
                "{} predictions, {} labels",
                preds.len(),
                truth.len()
            )));
        }
        let cc = ConfusionCounts::from_pairs(preds.iter().copied().zip(truth.iter().copied()));
        let (precision, recall, f1) = precision_recall_f1(&cc);
        let auc = match roc_auc(scores, truth) {
            Err(Error::UndefinedMetric(_)) => 0.5,
            other => other?,
        };
        Ok(Self {
            accuracy: cc.accuracy(),
            precision,
            recall,
            f1,
            auc,
            mcc: mcc(&cc),
        })
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.auc,
            self.mcc,
        ]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            accuracy: v[0],
            precision: v[1],
            recall: v[2],
            f1: v[3],
            auc: v[4],
            mcc: v[5],
        }
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, sqrt(var))
}
