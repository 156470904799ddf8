use esle_core::analysis::{
    build_icw_groups, ch_index, class_feature_vectors, interference, pca_project, IcwGroup,
};
use esle_core::embed::{EmbeddingMatrix, ManifestRow};
use esle_core::labels::{MetaLabel, NUM_LABELS};
use esle_core::rng;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;

fn random_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::seeded(seed, 0);
    (0..n)
        .map(|_| {
            (0..d)
                .map(|k| r.random_range(-1.0..1.0) * (k + 1) as f64)
                .collect()
        })
        .collect()
}

#[test]
fn pca_matches_dense_eigensolver() {
    let pts = random_points(50, 8, 3);
    let p = pca_project(&pts, 2).unwrap();
    let n = pts.len() as f64;
    let x = DMatrix::from_fn(50, 8, |i, j| pts[i][j]);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(50, 8, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..8).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().sum();
    for (k, &col) in order.iter().take(2).enumerate() {
        assert!((p.ratios[k] - eig.eigenvalues[col] / total).abs() < 1e-8);
        let v = eig.eigenvectors.column(col);
        let lead = (0..8)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
            .unwrap();
        let sign = v[lead].signum();
        for j in 0..8 {
            assert!((p.components[k][j] - sign * v[j]).abs() < 1e-8);
        }
        for (i, row) in p.points.iter().enumerate() {
            let want: f64 = (0..8).map(|j| sign * v[j] * centered[(i, j)]).sum();
            assert!((row[k] - want).abs() < 1e-8);
        }
    }
}

#[test]
fn pca_ratios_survive_rotation() {
    let pts = random_points(40, 3, 9);
    let (c, s) = (0.6f64, 0.8f64);
    let rotated: Vec<Vec<f64>> = pts
        .iter()
        .map(|p| vec![c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]])
        .collect();
    let a = pca_project(&pts, 2).unwrap();
    let b = pca_project(&rotated, 2).unwrap();
    for k in 0..2 {
        assert!((a.ratios[k] - b.ratios[k]).abs() < 1e-9);
        for (pa, pb) in a.points.iter().zip(&b.points) {
            assert!((pa[k].abs() - pb[k].abs()).abs() < 1e-9);
        }
    }
}

fn scatter_oracle(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let d = points[0].len();
    let n = points.len();
    let mean = |idx: &[usize]| -> Vec<f64> {
        (0..d)
            .map(|j| idx.iter().map(|&i| points[i][j]).sum::<f64>() / idx.len() as f64)
            .collect()
    };
    let all: Vec<usize> = (0..n).collect();
    let g = mean(&all);
    let mut ks: Vec<usize> = labels.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let (mut b, mut w) = (DMatrix::<f64>::zeros(d, d), DMatrix::<f64>::zeros(d, d));
    for &k in &ks {
        let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == k).collect();
        let m = mean(&idx);
        let dm = DMatrix::from_fn(d, 1, |j, _| m[j] - g[j]);
        b += idx.len() as f64 * &dm * dm.transpose();
        for &i in &idx {
            let dx = DMatrix::from_fn(d, 1, |j, _| points[i][j] - m[j]);
            w += &dx * dx.transpose();
        }
    }
    let k = ks.len() as f64;
    (b.trace() / (k - 1.0)) / (w.trace() / (n as f64 - k))
}

proptest! {
    #[test]
    fn ch_matches_scatter_matrices(seed in 0u64..500, n in 6usize..40, k in 2usize..5) {
        let pts = random_points(n, 3, seed);
        let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        rng::shuffle(&mut labels, &mut rng::seeded(seed, 1));
        let got = ch_index(&pts, &labels).unwrap();
        let want = scatter_oracle(&pts, &labels);
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
    }

    #[test]
    fn groups_agree_with_pair_enumeration(
        raw in prop::collection::vec(0u32..64, 1..16),
        icw in 0u32..3,
    ) {
        // low bits only, so collisions are common
        let labels: Vec<MetaLabel> = raw.iter().map(|&b| MetaLabel(((b & 0x3c) << 2) | (b & 3))).collect();
        let groups = build_icw_groups(&labels, icw);
        let mut from_groups = std::collections::BTreeSet::new();
        for g in &groups {
            prop_assert!(!g.set_with.is_empty() && !g.set_without.is_empty());
            for &i in &g.set_with {
                for &j in &g.set_without {
                    from_groups.insert((g.class_id, i, j));
                }
            }
        }
        let mut enumerated = std::collections::BTreeSet::new();
        for c in 0..NUM_LABELS {
            for (i, a) in labels.iter().enumerate() {
                for (j, b) in labels.iter().enumerate() {
                    if a.bit(c) && !b.bit(c) && (a.0 ^ b.0) == 1 << c && interference(a.0, c) == icw {
                        enumerated.insert((c, i, j));
                    }
                }
            }
        }
        prop_assert_eq!(from_groups, enumerated);
    }

    #[test]
    fn differences_add_back_exactly(seed in 0u64..200, c1 in 1usize..8, c2 in 1usize..8) {
        let n = c1 + c2;
        let mut r = rng::seeded(seed, 2);
        let values: Vec<f64> = (0..n * 4).map(|_| f64::from(r.random_range(-512i32..512)) / 256.0).collect();
        let manifest = (0..n).map(|i| ManifestRow { row: i, n: i, lat: 0.0, lon: 0.0 }).collect();
        let m = EmbeddingMatrix::new(4, values, manifest).unwrap();
        let g = IcwGroup { class_id: 1, icw: 0, pattern: 0, set_with: (0..c1).collect(), set_without: (c1..n).collect() };
        let fv = class_feature_vectors(&[g], &m, seed).unwrap();
        prop_assert_eq!(fv.vectors.len(), c1.min(c2));
        for v in &fv.vectors {
            let back: Vec<f64> = v.values.iter().zip(m.row(v.without_row)).map(|(d, x)| d + x).collect();
            prop_assert_eq!(back.as_slice(), m.row(v.with_row));
        }
    }
}
