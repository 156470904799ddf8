use esle_core::corpus::{
    generate_synthetic_tile, sample_profile, Location, ProfileMix, TileCorpus, TileImage,
    TileSource,
};
use esle_core::embed::{
    compose, embed_corpus, extract_embedding, nearest_neighbors, ComposeOp, EmbeddingMatrix,
    EmbeddingVector, ManifestRow,
};
use esle_core::labels::{binarize_meta, MetaLabel};
use esle_core::metrics::cosine;
use esle_core::nnet::{forward, predict_labels, ConvSpec, ModelParams, NetworkConfig, Tensor};
use esle_core::rng;
use proptest::prelude::*;

const SIZE: usize = 24;

fn net() -> NetworkConfig {
    NetworkConfig {
        input: [3, SIZE, SIZE],
        convs: vec![
            ConvSpec {
                out_channels: 6,
                kernel: 5,
                padding: 0,
                pool: true,
            },
            ConvSpec {
                out_channels: 8,
                kernel: 3,
                padding: 0,
                pool: true,
            },
        ],
        hidden: vec![32],
        embedding_dim: 8,
        num_labels: 18,
    }
}

fn tiles(n: usize, seed: u64) -> (Vec<TileImage>, Vec<MetaLabel>) {
    let mut r = rng::seeded(seed, 99);
    let mix = ProfileMix::default();
    (0..n)
        .map(|i| {
            let p = sample_profile(&mut r, &mix);
            let loc = Location::new(35.0 + i as f64 * 1e-3, 139.0).unwrap();
            let (t, c) = generate_synthetic_tile(seed * 1000 + i as u64, SIZE, &p, loc).unwrap();
            (t, binarize_meta(&c))
        })
        .unzip()
}

fn corpus(n: usize, seed: u64) -> TileCorpus {
    TileCorpus::new(tiles(n, seed).0, TileSource::Synthetic).unwrap()
}

fn batch(tiles: &[TileImage]) -> Tensor {
    let mut data = Vec::new();
    for t in tiles {
        t.write_normalized(&mut data);
    }
    Tensor::new(vec![tiles.len(), 3, SIZE, SIZE], data).unwrap()
}

#[test]
fn extraction_matches_forward_and_prediction_head() {
    let params = ModelParams::init(&net(), 3).unwrap();
    let (ts, _) = tiles(3, 1);
    let e = extract_embedding(&params, &ts[0]).unwrap();
    assert_eq!(e.dim(), 8);
    assert_eq!(e, extract_embedding(&params, &ts[0]).unwrap());
    assert_eq!(e.location, Some(ts[0].location));
    let out = forward(&params, &batch(&ts[..1])).unwrap();
    assert_eq!(out.embedding(0), e.values.as_slice());
    let probs = predict_labels(&params, &ts[..1], 0.5).unwrap();
    assert_eq!(params.head_probs(&e.values), probs.probs_of(0));
}

#[test]
fn wrong_tile_size_is_a_shape_error() {
    let params = ModelParams::init(&net(), 3).unwrap();
    let t = TileImage::filled(Location::new(0.0, 0.0).unwrap(), 32, [1, 2, 3]);
    assert!(extract_embedding(&params, &t).is_err());
}

#[test]
fn corpus_rows_follow_corpus_order_and_batching() {
    let params = ModelParams::init(&net(), 4).unwrap();
    let c = corpus(21, 2);
    let m = embed_corpus(&params, &c).unwrap();
    assert_eq!((m.len(), m.dim()), (21, 8));
    let out = forward(&params, &batch(c.tiles())).unwrap();
    for (i, tile) in c.tiles().iter().enumerate() {
        assert_eq!(
            m.row(i),
            extract_embedding(&params, tile).unwrap().values.as_slice()
        );
        assert_eq!(m.row(i), out.embedding(i));
        assert_eq!(m.manifest()[i].n, c.manifest()[i].n);
        assert_eq!(m.manifest()[i].row, i);
    }
    let single = embed_corpus(&params, &corpus(1, 2)).unwrap();
    assert_eq!((single.len(), single.row(0)), (1, m.row(0)));
}

fn matrix_of(rows: &[Vec<f64>]) -> EmbeddingMatrix {
    let dim = rows[0].len();
    let manifest = (0..rows.len())
        .map(|i| ManifestRow {
            row: i,
            n: i,
            lat: 0.0,
            lon: 0.0,
        })
        .collect();
    EmbeddingMatrix::new(dim, rows.concat(), manifest).unwrap()
}

fn brute_force(rows: &[Vec<f64>], q: &[f64]) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (i, cosine(q, r).unwrap_or(0.0)))
        .collect();
    // stable sort keeps lower rows first among equal scores
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    all
}

#[test]
fn five_rows_top_three_match_exhaustive_sort() {
    let rows: Vec<Vec<f64>> = vec![
        vec![1.0, 0.2, -0.3],
        vec![0.1, 0.9, 0.4],
        vec![-0.5, 0.5, 0.5],
        vec![0.8, 0.1, 0.0],
        vec![0.0, -1.0, 0.2],
    ];
    let q = [0.7, 0.3, -0.1];
    let got = nearest_neighbors(&matrix_of(&rows), &q, 3).unwrap();
    assert_eq!(got.hits, brute_force(&rows, &q)[..3]);
    let full = nearest_neighbors(&matrix_of(&rows), &q, 5).unwrap();
    assert!(full.hits.windows(2).all(|w| w[0].1 >= w[1].1));
    assert!(!full.truncated);
}

proptest! {
    #[test]
    fn retrieval_equals_full_scan(
        rows in prop::collection::vec(prop::collection::vec(-3i8..=3, 4), 1..60),
        q in prop::collection::vec(-3i8..=3, 4),
        k in 1usize..70,
    ) {
        prop_assume!(q.iter().any(|&v| v != 0));
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect();
        let q: Vec<f64> = q.iter().map(|&v| f64::from(v)).collect();
        let got = nearest_neighbors(&matrix_of(&rows), &q, k).unwrap();
        let mut want = brute_force(&rows, &q);
        want.truncate(k);
        prop_assert_eq!(got.hits, want);
        prop_assert_eq!(got.truncated, k > rows.len());
    }

    #[test]
    fn ranking_ignores_positive_query_scale(
        rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..30),
        q in prop::collection::vec(0.1f64..5.0, 3),
        scale in 0.01f64..100.0,
    ) {
        let m = matrix_of(&rows);
        let a = nearest_neighbors(&m, &q, rows.len()).unwrap();
        let scaled: Vec<f64> = q.iter().map(|v| v * scale).collect();
        let b = nearest_neighbors(&m, &scaled, rows.len()).unwrap();
        for (x, y) in a.hits.iter().zip(&b.hits) {
            prop_assert!((x.1 - y.1).abs() < 1e-9);
        }
        let order = |n: &esle_core::embed::Neighbors| -> Vec<i64> {
            n.hits.iter().map(|h| (h.1 * 1e6).round() as i64).collect()
        };
        prop_assert_eq!(order(&a), order(&b));
    }

    #[test]
    fn compose_add_then_sub_restores_dyadic_values(
        a in prop::collection::vec(-1000i32..1000, 5),
        b in prop::collection::vec(-1000i32..1000, 5),
    ) {
        let v = |x: &[i32]| EmbeddingVector::new(x.iter().map(|&i| f64::from(i) / 64.0).collect(), None).unwrap();
        let (a, b) = (v(&a), v(&b));
        let back = compose(&compose(&a, ComposeOp::Add, &b).unwrap(), ComposeOp::Sub, &b).unwrap();
        prop_assert_eq!(back.values, a.values);
    }
}

#[test]
fn nearest_neighbour_shares_a_rare_label() {
    // labels whose pattern occurs two to five times in the corpus
    let params = ModelParams::init(&net(), 11).unwrap();
    let (ts, labels) = tiles(600, 7);
    let c = TileCorpus::new(ts, TileSource::Synthetic).unwrap();
    let m = embed_corpus(&params, &c).unwrap();
    let mut hits = 0;
    let mut trials = 0;
    let mut base = 0.0;
    for i in 0..labels.len() {
        let same: Vec<usize> = (0..labels.len())
            .filter(|&j| j != i && labels[j] == labels[i])
            .collect();
        if !(1..=4).contains(&same.len()) {
            continue;
        }
        let nn = nearest_neighbors(&m, m.row(i), 2).unwrap();
        let top = nn.hits.iter().find(|h| h.0 != i).unwrap().0;
        hits += usize::from(labels[top] == labels[i]);
        base += same.len() as f64 / (labels.len() - 1) as f64;
        trials += 1;
        if trials == 100 {
            break;
        }
    }
    assert!(trials >= 20, "only {trials} rare labels");
    assert!(
        hits as f64 >= 2.0 * base,
        "{hits} hits in {trials} trials, base {base}"
    );
}
