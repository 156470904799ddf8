//! Class feature directions in embedding space: ICW groups, paired
//! differences, PCA and cluster scoring.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use libm::{fabs, sqrt};
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingMatrix;
use crate::labels::{MetaLabel, BUILDING_LESS, NUM_LABELS, ROAD_LESS};
use crate::rng::{self, stream};
use crate::{Error, Result};

/// Bits that mark the low building and road buckets. Every well-formed
/// label sets one bucket bit of each group, so these two are left out of
/// the interference count; otherwise no tile could reach ICW 0.
pub const ICW_IGNORED_BITS: u32 = (1 << BUILDING_LESS) | (1 << ROAD_LESS);

/// Interfering class weight of the bits other than `class`.
pub fn interference(bits: u32, class: usize) -> u32 {
    (bits & !(1 << class) & !ICW_IGNORED_BITS).count_ones()
}

/// Tiles whose labels differ only in bit `class`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcwGroup {
    pub class_id: usize,
    pub icw: u32,
    /// Label bits shared by every member, with bit `class_id` cleared.
    pub pattern: u32,
    pub set_with: Vec<usize>,
    pub set_without: Vec<usize>,
}

/// One group per class and exact other-bit pattern of weight `icw`, keeping
/// only groups with both sides nonempty. Indices refer to `labels`.
pub fn build_icw_groups(labels: &[MetaLabel], icw: u32) -> Vec<IcwGroup> {
    let mut groups = Vec::new();
    for class in 0..NUM_LABELS {
        let mut by_pattern: BTreeMap<u32, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
        for (i, label) in labels.iter().enumerate() {
            let pattern = label.0 & !(1 << class);
            if interference(pattern, class) != icw {
                continue;
            }
            let entry = by_pattern.entry(pattern).or_default();
            if label.bit(class) {
                entry.0.push(i);
            } else {
                entry.1.push(i);
            }
        }
        for (pattern, (with, without)) in by_pattern {
            if !with.is_empty() && !without.is_empty() {
                groups.push(IcwGroup {
                    class_id: class,
                    icw,
                    pattern,
                    set_with: with,
                    set_without: without,
                });
            }
        }
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub class_id: usize,
    pub icw: u32,
    pub with_row: usize,
    pub without_row: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVectorSet {
    pub vectors: Vec<FeatureVector>,
}

impl FeatureVectorSet {
    pub fn classes(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.vectors.iter().map(|v| v.class_id).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Mean difference vector per class.
    pub fn class_means(&self) -> BTreeMap<usize, Vec<f64>> {
        let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
        for v in &self.vectors {
            let e = sums
                .entry(v.class_id)
                .or_insert_with(|| (vec![0.0; v.values.len()], 0));
            for (s, x) in e.0.iter_mut().zip(&v.values) {
                *s += x;
            }
            e.1 += 1;
        }
        sums.into_iter()
            .map(|(c, (s, n))| (c, s.into_iter().map(|x| x / n as f64).collect()))
            .collect()
    }
}

/// For each group, `min(C1, C2)` differences `e_with - e_without` from
/// randomly paired rows, each row used at most once per side.
pub fn class_feature_vectors(
    groups: &[IcwGroup],
    matrix: &EmbeddingMatrix,
    seed: u64,
) -> Result<FeatureVectorSet> {
    let mut rng = rng::seeded(seed, stream::PAIRS);
    let mut vectors = Vec::new();
    for g in groups {
        if let Some(&bad) = g
            .set_with
            .iter()
            .chain(&g.set_without)
            .find(|&&i| i >= matrix.len())
        {
            return Err(Error::InvalidInput(format!(
                "group row {bad} outside a matrix of {} rows",
                matrix.len()
            )));
        }
        let mut with = g.set_with.clone();
        let mut without = g.set_without.clone();
        rng::shuffle(&mut with, &mut rng);
        rng::shuffle(&mut without, &mut rng);
        for (&a, &b) in with.iter().zip(&without) {
            let values = matrix
                .row(a)
                .iter()
                .zip(matrix.row(b))
                .map(|(x, y)| x - y)
                .collect();
            vectors.push(FeatureVector {
                class_id: g.class_id,
                icw: g.icw,
                with_row: a,
                without_row: b,
                values,
            });
        }
    }
    Ok(FeatureVectorSet { vectors })
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and unit eigenvectors as rows.
pub fn symmetric_eigen(a: &[f64], d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>();
    for _ in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * d + j] * m[i * d + j])
            .sum();
        if off <= 1e-30 * scale || off == 0.0 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = m[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * d + q] - m[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (fabs(theta) + sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..d {
                    let (mkp, mkq) = (m[k * d + p], m[k * d + q]);
                    m[k * d + p] = c * mkp - s * mkq;
                    m[k * d + q] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let (mpk, mqk) = (m[p * d + k], m[q * d + k]);
                    m[p * d + k] = c * mpk - s * mqk;
                    m[q * d + k] = s * mpk + c * mqk;
                }
                for k in 0..d {
                    let (vkp, vkq) = (v[k * d + p], v[k * d + q]);
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m[j * d + j].total_cmp(&m[i * d + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[i * d + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..d).map(|k| v[k * d + i]).collect())
        .collect();
    (values, vectors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub points: Vec<Vec<f64>>,
    /// Share of total variance per kept component, non-increasing.
    pub ratios: Vec<f64>,
    /// Unit principal directions, one per kept component.
    pub components: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

/// Mean-centered projection onto the top `dims` principal components of
/// the sample covariance. Each component's largest-magnitude coordinate is
/// made positive.
pub fn pca_project(vectors: &[Vec<f64>], dims: usize) -> Result<Projection> {
    let n = vectors.len();
    if dims == 0 || n < dims + 1 {
        return Err(Error::InvalidInput(format!(
            "PCA to {dims} dimensions needs more than {n} vectors"
        )));
    }
    let d = vectors[0].len();
    if d < dims || vectors.iter().any(|v| v.len() != d) {
        return Err(Error::Shape(format!(
            "PCA to {dims} dimensions of ragged or short vectors"
        )));
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite PCA input".into()));
    }
    let mut mean = vec![0.0; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    for v in vectors {
        for i in 0..d {
            let ci = v[i] - mean[i];
            for j in i..d {
                cov[i * d + j] += ci * (v[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i * d + j] /= (n - 1) as f64;
            cov[j * d + i] = cov[i * d + j];
        }
    }
    let (values, mut vecs) = symmetric_eigen(&cov, d);
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    let ratios = values[..dims]
        .iter()
        .map(|v| if total > 0.0 { v.max(0.0) / total } else { 0.0 })
        .collect();
    vecs.truncate(dims);
    for comp in &mut vecs {
        let lead = (0..d).fold(0, |best, k| {
            if fabs(comp[k]) > fabs(comp[best]) {
                k
            } else {
                best
            }
        });
        if comp[lead] < 0.0 {
            comp.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let points = vectors
        .iter()
        .map(|v| {
            vecs.iter()
                .map(|c| {
                    c.iter()
                        .zip(v)
                        .zip(&mean)
                        .map(|((c, x), m)| c * (x - m))
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(Projection {
        points,
        ratios,
        components: vecs,
        mean,
    })
}

/// Calinski-Harabasz index `[tr(B)/(k-1)] / [tr(W)/(n-k)]`; infinite when
/// every cluster is a single point repeated.
pub fn ch_index(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let n = points.len();
    if n != labels.len() {
        return Err(Error::Shape(format!(
            "{n} points but {} labels",
            labels.len()
        )));
    }
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        clusters.entry(l).or_default().push(i);
    }
    let k = clusters.len();
    if k < 2 || n <= k {
        return Err(Error::InvalidInput(format!(
            "CH index needs at least 2 clusters and more points than clusters, got {k} and {n}"
        )));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Shape("ragged points".into()));
    }
    let centroid = |idx: &[usize]| -> Vec<f64> {
        let mut c = vec![0.0; d];
        for &i in idx {
            for (s, x) in c.iter_mut().zip(&points[i]) {
                *s += x;
            }
        }
        c.iter_mut().for_each(|s| *s /= idx.len() as f64);
        c
    };
    let all: Vec<usize> = (0..n).collect();
    let overall = centroid(&all);
    let sq =
        |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
    let (mut between, mut within) = (0.0, 0.0);
    for idx in clusters.values() {
        let c = centroid(idx);
        between += idx.len() as f64 * sq(&c, &overall);
        within += idx.iter().map(|&i| sq(&points[i], &c)).sum::<f64>();
    }
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((between / (k - 1) as f64) / (within / (n - k) as f64))
}
