use esle_core::corpus::{haversine_km, Location};
use esle_core::labels::{MetaLabel, NUM_LABELS};
use esle_core::metrics::entropy_bits;
use esle_core::portseek::{
    balanced_samples, build_candidate_set, evaluate_recommendation, fit_logreg, flow_labels,
    flow_prediction, identify, intersect_recommendations, pairwise_distance_quantile, plant_flows,
    plant_ports, poi_count_means, rank_candidates, recommend_top_m, score_future_ports,
    temporal_identification, train_count, Features, LogRegConfig, LogRegModel, PortRecord,
    Recommendation,
};
use esle_core::rng;
use proptest::prelude::*;
use rand::Rng;

fn grid_loc(i: usize) -> Location {
    Location::new(
        35.0 + (i / 10) as f64 * 0.01,
        139.0 + (i % 10) as f64 * 0.01,
    )
    .unwrap()
}

fn gaussian<R: Rng>(r: &mut R) -> f64 {
    // Box-Muller
    let (u, v): (f64, f64) = (r.random_range(f64::EPSILON..1.0), r.random());
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// `n_pos` rows around `+shift` and `n_neg` rows around `-shift` in `d` dims.
fn blobs(n_pos: usize, n_neg: usize, d: usize, shift: f64, seed: u64) -> Features {
    let mut r = rng::seeded(seed, 0);
    let rows: Vec<Vec<f64>> = (0..n_pos + n_neg)
        .map(|i| {
            let s = if i < n_pos { shift } else { -shift };
            (0..d).map(|_| s + gaussian(&mut r)).collect()
        })
        .collect();
    Features::from_rows(&rows).unwrap()
}

fn loc(lat: f64, lon: f64) -> Location {
    Location::new(lat, lon).unwrap()
}

#[test]
fn candidate_threshold_edges() {
    let tiles = [loc(35.0, 139.0), loc(35.1, 139.0), loc(35.2, 139.0)];
    assert_eq!(
        build_candidate_set(&tiles, &[tiles[0]], 0.0).unwrap().tiles,
        [0, 1, 2]
    );
    assert_eq!(
        build_candidate_set(&tiles, &[tiles[0]], 0.5).unwrap().tiles,
        [1, 2]
    );
    assert_eq!(
        build_candidate_set(&tiles, &[tiles[0]], 15.0)
            .unwrap()
            .tiles,
        [2]
    );
    assert!(build_candidate_set(&tiles, &[], -1.0).is_err());
}

proptest! {
    #[test]
    fn candidates_shrink_as_threshold_grows(
        pts in prop::collection::vec((35.0f64..35.5, 139.0f64..139.5), 2..30),
        ports in prop::collection::vec((35.0f64..35.5, 139.0f64..139.5), 1..5),
        a in 0.0f64..30.0,
        b in 0.0f64..30.0,
    ) {
        let tiles: Vec<Location> = pts.iter().map(|&(la, lo)| loc(la, lo)).collect();
        let ports: Vec<Location> = ports.iter().map(|&(la, lo)| loc(la, lo)).collect();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let small = build_candidate_set(&tiles, &ports, hi).unwrap();
        let large = build_candidate_set(&tiles, &ports, lo).unwrap();
        prop_assert!(small.tiles.iter().all(|t| large.tiles.contains(t)));
        for &t in &small.tiles {
            prop_assert!(ports.iter().all(|&p| haversine_km(tiles[t], p) >= hi));
        }
    }

    #[test]
    fn balanced_split_counts(n_pos in 1usize..30, extra in 0usize..20, seed in 0u64..100) {
        let pos: Vec<usize> = (0..n_pos).collect();
        let neg: Vec<usize> = (100..100 + n_pos + extra).collect();
        for s in balanced_samples(&pos, &neg, 3, seed).unwrap() {
            let count = |rows: &[(usize, bool)], y: bool| rows.iter().filter(|r| r.1 == y).count();
            prop_assert_eq!(count(&s.train, true), train_count(n_pos));
            prop_assert_eq!(count(&s.train, false), train_count(n_pos));
            prop_assert_eq!(count(&s.test, true), n_pos - train_count(n_pos));
            prop_assert_eq!(count(&s.test, false), n_pos - train_count(n_pos));
            let mut negs: Vec<usize> = s.train.iter().chain(&s.test).filter(|r| !r.1).map(|r| r.0).collect();
            negs.sort_unstable();
            negs.dedup();
            prop_assert_eq!(negs.len(), n_pos);
            prop_assert!(negs.iter().all(|n| neg.contains(n)));
        }
    }

    #[test]
    fn ranking_ignores_increasing_transforms(
        scores in prop::collection::vec(0.0f64..1.0, 1..40),
        m in 1usize..40,
    ) {
        let candidates: Vec<usize> = (0..scores.len()).map(|i| 3 * i + 1).collect();
        let m = m.min(scores.len());
        let a = rank_candidates(&candidates, &scores, m).unwrap();
        let warped: Vec<f64> = scores.iter().map(|s| (5.0 * s).exp() + 2.0).collect();
        let b = rank_candidates(&candidates, &warped, m).unwrap();
        let tiles = |l: &[Recommendation]| l.iter().map(|r| r.tile).collect::<Vec<_>>();
        prop_assert_eq!(tiles(&a), tiles(&b));
    }

    #[test]
    fn intersection_is_bounded_and_order_free(
        lists in prop::collection::vec(prop::collection::vec(0usize..30, 1..15), 1..5),
    ) {
        let recs: Vec<Vec<Recommendation>> = lists
            .iter()
            .map(|l| {
                let mut seen = Vec::new();
                for &t in l {
                    if !seen.contains(&t) {
                        seen.push(t);
                    }
                }
                seen.iter().enumerate().map(|(i, &t)| Recommendation { rank: i + 1, tile: t, score: 0.0 }).collect()
            })
            .collect();
        let shared = intersect_recommendations(&recs).unwrap();
        prop_assert!(shared.len() <= recs.iter().map(Vec::len).min().unwrap());
        let mut reversed = recs.clone();
        reversed.reverse();
        prop_assert_eq!(shared, intersect_recommendations(&reversed).unwrap());
    }
}

#[test]
fn balanced_samples_edges() {
    let pos = [0, 1, 2];
    let all = balanced_samples(&pos, &[7, 8, 9], 2, 4).unwrap();
    for s in &all {
        let mut negs: Vec<usize> = s
            .train
            .iter()
            .chain(&s.test)
            .filter(|r| !r.1)
            .map(|r| r.0)
            .collect();
        negs.sort_unstable();
        assert_eq!(negs, [7, 8, 9]);
    }
    assert_eq!(all, balanced_samples(&pos, &[7, 8, 9], 2, 4).unwrap());
    assert!(balanced_samples(&pos, &[7, 8], 2, 4).is_err());
}

#[test]
fn logreg_separates_one_dimensional_classes() {
    let f = Features::new(1, vec![-1.0, -1.0, -1.0, 1.0, 1.0, 1.0]).unwrap();
    let rows: Vec<usize> = (0..6).collect();
    let y = [false, false, false, true, true, true];
    let m = fit_logreg(&f, &rows, &y, &LogRegConfig::default()).unwrap();
    for (i, &yi) in y.iter().enumerate() {
        assert_eq!(m.predict_proba(f.row(i)) >= 0.5, yi);
    }
    assert!(fit_logreg(&f, &rows, &[true; 6], &LogRegConfig::default()).is_err());
}

#[test]
fn logreg_is_at_chance_on_unrelated_labels() {
    let mut accs = Vec::new();
    for seed in 0..20 {
        let f = blobs(200, 0, 3, 0.0, seed);
        let mut r = rng::seeded(seed, 5);
        let y: Vec<bool> = (0..200).map(|_| r.random()).collect();
        let train: Vec<usize> = (0..140).collect();
        let m = fit_logreg(&f, &train, &y[..140], &LogRegConfig::default()).unwrap();
        let correct = (140..200)
            .filter(|&i| (m.predict_proba(f.row(i)) >= 0.5) == y[i])
            .count();
        accs.push(correct as f64 / 60.0);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 0.5).abs() <= 0.1, "mean accuracy {mean}");
}

#[test]
fn duplicated_column_keeps_predictions_without_penalty() {
    let f = blobs(30, 30, 1, 0.5, 8);
    let dup = Features::concat(&[&f, &f]).unwrap();
    let rows: Vec<usize> = (0..60).collect();
    let y: Vec<bool> = (0..60).map(|i| i < 30).collect();
    let cfg = LogRegConfig {
        l2: 0.0,
        ..LogRegConfig::default()
    };
    let a = fit_logreg(&f, &rows, &y, &cfg).unwrap();
    let b = fit_logreg(&dup, &rows, &y, &cfg).unwrap();
    for i in 0..60 {
        assert!((a.predict_proba(f.row(i)) - b.predict_proba(dup.row(i))).abs() < 1e-6);
    }
}

#[test]
fn identification_on_separated_and_identical_blobs() {
    let f = blobs(40, 200, 4, 2.0, 1);
    let pos: Vec<usize> = (0..40).collect();
    let neg: Vec<usize> = (40..240).collect();
    let (_, s) = identify(&f, &pos, &neg, 10, &LogRegConfig::default(), 2).unwrap();
    for v in s.mean.as_array() {
        assert!(v >= 0.95, "{:?}", s.mean);
    }
    let f = blobs(40, 200, 4, 0.0, 1);
    let (_, s) = identify(&f, &pos, &neg, 30, &LogRegConfig::default(), 2).unwrap();
    assert!(
        (s.mean.accuracy - 0.5).abs() < 0.1 && s.mean.mcc.abs() < 0.15,
        "{:?}",
        s.mean
    );
}

#[test]
fn temporal_series_skips_thin_months() {
    let f = blobs(30, 100, 3, 2.0, 4);
    let here = loc(35.0, 139.0);
    let ports: Vec<PortRecord> = (0..30)
        .map(|i| PortRecord {
            location: here,
            start_month: [0, 2, 2, 5][i % 4] + u32::from(i >= 28) * 9,
            tile: i,
        })
        .collect();
    let neg: Vec<usize> = (30..130).collect();
    let series = temporal_identification(&ports, &neg, &f, 3, &LogRegConfig::default(), 1).unwrap();
    let months: Vec<u32> = series.months.iter().map(|m| m.month).collect();
    assert_eq!(months, [0, 2, 5, 9, 11]);
    assert!(series.skipped.is_empty());
    assert!(series
        .months
        .iter()
        .all(|m| m.metrics.mean.accuracy >= 0.95));
    assert!(series.months.last().unwrap().future_score.is_none());
    let (mean, _) = series.months[0].future_score.unwrap();
    assert!(mean > 0.9);
    let lone = [
        PortRecord {
            location: here,
            start_month: 0,
            tile: 0,
        },
        PortRecord {
            location: here,
            start_month: 1,
            tile: 1,
        },
    ];
    let s = temporal_identification(&lone, &neg, &f, 2, &LogRegConfig::default(), 1).unwrap();
    assert_eq!(s.skipped, [0]);
    assert_eq!(s.months.len(), 1);
}

#[test]
fn future_scores() {
    let f = blobs(2, 2, 3, 1.0, 0);
    let (mean, std) = score_future_ports(&[LogRegModel::zero(3)], &f, &[0, 1, 2, 3]).unwrap();
    assert_eq!((mean, std), (0.5, 0.0));
    assert!(score_future_ports(&[], &f, &[0]).is_err());
}

#[test]
fn planted_candidate_outranks_negative_centroid() {
    let mut rows: Vec<Vec<f64>> = (0..40)
        .map(|i| vec![2.0 + (i % 5) as f64 * 0.1, 1.0])
        .collect();
    rows.extend((0..100).map(|i| vec![-2.0 + (i % 7) as f64 * 0.1, -1.0 + (i % 3) as f64 * 0.1]));
    rows.push(rows[0].clone());
    rows.push(vec![-1.7, -0.9]);
    let f = Features::from_rows(&rows).unwrap();
    let ports: Vec<usize> = (0..40).collect();
    let candidates: Vec<usize> = (40..142).collect();
    let cfg = LogRegConfig::default();
    let all = recommend_top_m(&f, &ports, &candidates, 5, candidates.len(), &cfg, 3).unwrap();
    assert_eq!(all.len(), candidates.len());
    assert_eq!(all[0].tile, 140);
    let pos = |t: usize| all.iter().position(|r| r.tile == t).unwrap();
    assert!(pos(140) < pos(141));
    assert!(all.windows(2).all(|w| w[0].score >= w[1].score));
    assert_eq!(
        all,
        recommend_top_m(&f, &ports, &candidates, 5, candidates.len(), &cfg, 3).unwrap()
    );
    assert!(recommend_top_m(&f, &ports, &candidates, 5, 0, &cfg, 3).is_err());
}

#[test]
fn intersection_edges() {
    let list = |tiles: &[usize]| -> Vec<Recommendation> {
        tiles
            .iter()
            .enumerate()
            .map(|(i, &t)| Recommendation {
                rank: i + 1,
                tile: t,
                score: 0.0,
            })
            .collect()
    };
    let a = list(&[4, 2, 9]);
    assert_eq!(
        intersect_recommendations(&[a.clone(), a.clone()])
            .unwrap()
            .len(),
        3
    );
    assert!(intersect_recommendations(&[a.clone(), list(&[1, 3])])
        .unwrap()
        .is_empty());
    let shared = intersect_recommendations(&[a, list(&[9, 4, 7])]).unwrap();
    assert_eq!(shared.iter().map(|s| s.tile).collect::<Vec<_>>(), [4, 9]);
    assert!(intersect_recommendations(&[]).is_err());
}

#[test]
fn poi_means_and_report_identities() {
    assert_eq!(poi_count_means(&[&[3, 1]]).unwrap(), [3.0, 1.0]);
    assert_eq!(poi_count_means(&[&[2, 0], &[0, 2]]).unwrap(), [1.0, 1.0]);
    assert!(poi_count_means(&[]).is_err());
    let v = [1.5, 0.0, 7.25, 3.0];
    let r = evaluate_recommendation(&v, &v).unwrap();
    assert!((r.cosine - 1.0).abs() <= 1e-12);
    assert!(r.kl_ref_rec.abs() <= 1e-12 && r.kl_rec_ref.abs() <= 1e-12);
    assert_eq!(r.entropy_ref, r.entropy_rec);
    let r = evaluate_recommendation(&[2.0, 2.0], &[4.0, 4.0]).unwrap();
    assert!((r.cosine - 1.0).abs() <= 1e-12 && r.kl_ref_rec.abs() <= 1e-12);
    assert!(evaluate_recommendation(&[0.0, 0.0], &[1.0, 1.0]).is_err());
    assert_eq!(entropy_bits(&[1.0 / 16.0; 16]).unwrap(), 4.0);
    let uniform = evaluate_recommendation(&[3.0; 16], &[5.0; 16]).unwrap();
    assert_eq!(uniform.entropy_ref, 4.0);
}

#[test]
fn flow_threshold_is_strict() {
    assert_eq!(
        flow_labels(&[25.0, 24.0, 24.5, 0.0], 24.0),
        [true, false, true, false]
    );
}

#[test]
fn flow_prediction_finds_planted_signal_and_not_shuffled_bits() {
    let f = blobs(0, 400, 4, 0.0, 6);
    let bits: Vec<bool> = (0..400).map(|i| f.row(i)[2] > 0.1).collect();
    let modes = vec![("emb".to_string(), f.clone())];
    let report = flow_prediction(&modes, &bits, &LogRegConfig::default(), 1).unwrap();
    assert!(report.modes[0].1.accuracy >= 0.95, "{report:?}");
    assert_eq!(report.train_size + report.test_size, 400);
    let mut mccs = Vec::new();
    for seed in 0..20 {
        let mut shuffled = bits.clone();
        rng::shuffle(&mut shuffled, &mut rng::seeded(seed, 3));
        mccs.push(
            flow_prediction(&modes, &shuffled, &LogRegConfig::default(), seed)
                .unwrap()
                .modes[0]
                .1
                .mcc,
        );
    }
    let mean = mccs.iter().sum::<f64>() / 20.0;
    assert!(mean.abs() < 0.1, "mean MCC {mean}");
    assert!(flow_prediction(&modes, &[true; 400], &LogRegConfig::default(), 1).is_err());
}

#[test]
fn distance_quantile_interpolates() {
    let pts = [loc(0.0, 0.0), loc(0.0, 1.0), loc(0.0, 3.0)];
    let d01 = haversine_km(pts[0], pts[1]);
    let d03 = haversine_km(pts[0], pts[2]);
    assert!((pairwise_distance_quantile(&pts, 0.0).unwrap() - d01).abs() < 1e-9);
    assert!((pairwise_distance_quantile(&pts, 1.0).unwrap() - d03).abs() < 1e-9);
    assert!(pairwise_distance_quantile(&pts[..1], 0.1).is_err());
}

proptest! {
    #[test]
    fn planted_ports_carry_the_profile(
        bits in prop::collection::vec(0u32..(1 << NUM_LABELS), 1..80),
        profile in prop::sample::select(vec![0u32, 1 << 2, (1 << 2) | (1 << 13), 1 << 8]),
        count in 0usize..40,
        horizon in 1u32..24,
        seed in any::<u64>(),
    ) {
        let labels: Vec<MetaLabel> = bits.iter().map(|&b| MetaLabel(b)).collect();
        let locs: Vec<Location> = (0..labels.len()).map(grid_loc).collect();
        let ports = plant_ports(&labels, &locs, profile, count, horizon, seed).unwrap();
        let eligible = labels.iter().filter(|l| l.0 & profile == profile).count();
        prop_assert_eq!(ports.len(), count.min(eligible));
        for p in &ports {
            prop_assert_eq!(labels[p.tile].0 & profile, profile);
            prop_assert_eq!(p.location, locs[p.tile]);
            prop_assert!(p.start_month < horizon);
        }
        prop_assert!(ports.windows(2).all(|w| (w[0].start_month, w[0].tile) < (w[1].start_month, w[1].tile)));
        prop_assert_eq!(plant_ports(&labels, &locs, profile, count, horizon, seed).unwrap(), ports);
    }
}

#[test]
fn noiseless_flows_take_two_levels() {
    let labels: Vec<MetaLabel> = (0..10)
        .map(|i| MetaLabel(if i % 3 == 0 { 1 << 8 } else { 1 }))
        .collect();
    let locs: Vec<Location> = (0..10).map(grid_loc).collect();
    let ports = plant_ports(&labels, &locs, 0, 10, 1, 3).unwrap();
    let flows = plant_flows(&ports, &labels, 1 << 8, (16.0, 16.0, 0.0), 3).unwrap();
    for (p, f) in ports.iter().zip(&flows) {
        let want = if p.tile % 3 == 0 { 32.0 } else { 16.0 };
        assert_eq!(f.hourly_mean, want);
        assert_eq!(f.tile, p.tile);
    }
    assert!(plant_ports(&labels, &locs[..3], 0, 1, 1, 0).is_err());
    assert!(plant_ports(&labels, &locs, 0, 1, 0, 0).is_err());
}
