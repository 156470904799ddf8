//! Pipeline stages. Each stage is a plain function over in-memory data so
//! the command line and the test harnesses run the same code.

use std::collections::BTreeMap;
use std::path::Path;

use esle_core::analysis::{build_icw_groups, ch_index, class_feature_vectors, pca_project};
use esle_core::corpus::{
    rotate_tile, sample_profile, tile_coverage_grid, Background, BoundingBox, GridSpacing,
    Location, SyntheticScene, TileCorpus, TileImage, TileSource,
};
use esle_core::embed::{embed_corpus_with, EmbeddingMatrix};
use esle_core::labels::{
    binarize_meta, count_meta, poi_vector, MetaLabel, PoiVocabulary, RuleTable, Tags, AMENITY_KEY,
    LABEL_NAMES, NUM_LABELS,
};
use esle_core::metrics::{multilabel_aggregate, Aggregation, ConfusionCounts, LabelMetrics};
use esle_core::nnet::{
    predict_labels_with, train_with, BaselineMode, DataSplit, EpochLog, Executor, ModelParams,
    StatBaseline, TrainConfig,
};
use esle_core::portseek::{
    build_candidate_set, candidate_scores, evaluate_recommendation, flow_labels, flow_prediction,
    intersect_recommendations, pairwise_distance_quantile, plant_flows, plant_ports,
    poi_count_means, rank_candidates, temporal_identification, FeatureSelector, Features,
    FlowRecord, FlowReport, IdentificationSeries, LogRegConfig, PoiReport, PortRecord,
    Recommendation,
};
use esle_core::rng::{self, stream};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{label_mask, GenerateConfig, SemanticsConfig};
use crate::exec::Pool;
use crate::formats::labels::{LabelRecord, LabelSet};
use crate::formats::tables::{
    nearest_tile, FeatureVectorRow, FlowRow, PortRow, ProjectionRow, RecommendationRow,
    SharedPickRow,
};
use crate::{Error, Result};

/// A synthetic corpus with the scenes behind it and planted ports.
#[derive(Debug, Clone)]
pub struct Generated {
    pub corpus: TileCorpus,
    pub scenes: Vec<SyntheticScene>,
    pub ports: Vec<PortRecord>,
    pub flows: Vec<FlowRecord>,
}

impl Generated {
    pub fn labels(&self) -> Vec<MetaLabel> {
        self.scenes
            .iter()
            .map(|s| binarize_meta(&s.counts()))
            .collect()
    }

    /// The tag maps a saved Overpass response for tile `n` holds: one per
    /// drawn primitive, then one per amenity.
    pub fn elements(&self, n: usize) -> Vec<Tags> {
        let scene = &self.scenes[n];
        let mut els = scene.elements();
        els.extend(
            scene
                .amenities()
                .into_iter()
                .map(|a| Tags::from([(AMENITY_KEY.to_string(), a)])),
        );
        els
    }

    pub fn port_rows(&self) -> Vec<PortRow> {
        self.ports
            .iter()
            .map(|p| PortRow {
                lat: p.location.lat,
                lon: p.location.lon,
                start_month: p.start_month,
            })
            .collect()
    }

    pub fn flow_rows(&self) -> Vec<FlowRow> {
        self.flows
            .iter()
            .map(|f| FlowRow {
                lat: f.location.lat,
                lon: f.location.lon,
                hourly_mean: f.hourly_mean,
            })
            .collect()
    }
}

/// The first `n` centers of a near-square regional mesh grid.
pub fn grid_locations(origin: (f64, f64), step_m: f64, n: usize) -> Result<Vec<Location>> {
    if n == 0 {
        return Err(Error::Invalid("a corpus needs at least one tile".into()));
    }
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let scale = step_m / 500.0;
    let (lat_step, lon_step) = (scale * 15.0 / 3600.0, scale * 22.5 / 3600.0);
    let bbox = BoundingBox {
        min_lat: origin.0,
        max_lat: origin.0 + (rows - 1) as f64 * lat_step,
        min_lon: origin.1,
        max_lon: origin.1 + (cols - 1) as f64 * lon_step,
    };
    let mut grid = tile_coverage_grid(bbox, step_m, GridSpacing::RegionalMesh)?;
    if grid.len() < n {
        return Err(Error::Invalid(format!(
            "grid of {} centers for {n} tiles",
            grid.len()
        )));
    }
    grid.truncate(n);
    Ok(grid)
}

pub fn generate(cfg: &GenerateConfig, seed: u64, pool: &Pool) -> Result<Generated> {
    let locations = grid_locations(cfg.origin, cfg.step_m, cfg.tiles)?;
    let mut rng = rng::seeded(seed, stream::PROFILE);
    let plans: Vec<_> = (0..cfg.tiles)
        .map(|_| (sample_profile(&mut rng, &cfg.mix), rng.random::<u64>()))
        .collect();
    let scenes = pool.try_map(cfg.tiles, |i| {
        let (profile, scene_seed) = &plans[i];
        Ok(SyntheticScene::sample(
            *scene_seed,
            cfg.size,
            profile,
            Background::Land,
        )?)
    })?;
    let tiles: Vec<TileImage> = pool.map(cfg.tiles, |i| scenes[i].render(locations[i]));
    let corpus = TileCorpus::new(tiles, TileSource::Synthetic)?;
    let labels: Vec<MetaLabel> = scenes.iter().map(|s| binarize_meta(&s.counts())).collect();
    let profile = label_mask(&cfg.port_profile)?;
    let ports = plant_ports(
        &labels,
        &locations,
        profile,
        cfg.port_count.unwrap_or(usize::MAX),
        cfg.horizon_months,
        seed,
    )?;
    let busy = label_mask(&cfg.busy_labels)?;
    let flows = plant_flows(&ports, &labels, busy, cfg.flow_levels, seed)?;
    Ok(Generated {
        corpus,
        scenes,
        ports,
        flows,
    })
}

/// Meta counts, label bits and POI vectors from each tile's tag maps.
pub fn label_tiles(docs: &[Vec<Tags>], rules: &RuleTable) -> LabelSet {
    let vocabulary = PoiVocabulary::build(docs.iter());
    let records = docs
        .iter()
        .enumerate()
        .map(|(n, els)| LabelRecord::new(n, count_meta(els, rules), poi_vector(els, &vocabulary)))
        .collect();
    LabelSet {
        records,
        vocabulary,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedMetrics {
    pub label: String,
    #[serde(flatten)]
    pub metrics: LabelMetrics,
}

/// Multi-label metrics of one set of predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEval {
    pub samples: usize,
    pub micro: LabelMetrics,
    #[serde(rename = "macro")]
    pub macro_: LabelMetrics,
    pub per_label: Vec<NamedMetrics>,
}

pub fn evaluate_bits(preds: &[u8], truth: &[u8]) -> Result<LabelEval> {
    let per_label = (0..NUM_LABELS)
        .map(|c| {
            let cc = ConfusionCounts::from_pairs(
                preds
                    .iter()
                    .skip(c)
                    .step_by(NUM_LABELS)
                    .zip(truth.iter().skip(c).step_by(NUM_LABELS))
                    .map(|(&p, &t)| (p == 1, t == 1)),
            );
            NamedMetrics {
                label: LABEL_NAMES[c].to_string(),
                metrics: LabelMetrics::from_confusion(&cc),
            }
        })
        .collect();
    Ok(LabelEval {
        samples: truth.len() / NUM_LABELS,
        micro: multilabel_aggregate(preds, truth, NUM_LABELS, Aggregation::Micro)?,
        macro_: multilabel_aggregate(preds, truth, NUM_LABELS, Aggregation::Macro)?,
        per_label,
    })
}

fn bits_of(labels: &[MetaLabel], idx: &[usize]) -> Vec<u8> {
    idx.iter().flat_map(|&i| labels[i].bits()).collect()
}

/// Label metrics of the model on the tiles `idx`.
pub fn evaluate_model(
    params: &ModelParams,
    tiles: &[TileImage],
    labels: &[MetaLabel],
    idx: &[usize],
    threshold: f64,
    pool: &Pool,
) -> Result<LabelEval> {
    let subset: Vec<TileImage> = idx.iter().map(|&i| tiles[i].clone()).collect();
    let pred = predict_labels_with(params, &subset, threshold, pool)?;
    evaluate_bits(&pred.bits, &bits_of(labels, idx))
}

/// Every tile of `idx` turned by one, two or three quarter turns.
pub fn rotated_tiles(tiles: &[TileImage], idx: &[usize], seed: u64) -> Vec<TileImage> {
    let mut rng = rng::seeded(seed, stream::AUGMENT + 0x100);
    idx.iter()
        .map(|&i| rotate_tile(&tiles[i], rng.random_range(1..4)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_tiles: Vec<usize>,
    pub test_tiles: usize,
    pub log: Vec<EpochLog>,
    pub test: LabelEval,
    pub rotated_test: Option<LabelEval>,
}

pub fn train_model(
    tiles: &[TileImage],
    labels: &[MetaLabel],
    network: &esle_core::nnet::NetworkConfig,
    tc: &TrainConfig,
    rotate_test: bool,
    pool: &Pool,
) -> Result<(ModelParams, TrainReport)> {
    let out = train_with(network, tiles, labels, tc, pool)?;
    let idx = if out.split.test.is_empty() {
        &out.split.train
    } else {
        &out.split.test
    };
    let test = evaluate_model(&out.params, tiles, labels, idx, tc.threshold, pool)?;
    let rotated_test = if rotate_test {
        let turned = rotated_tiles(tiles, idx, tc.seed);
        let pred = predict_labels_with(&out.params, &turned, tc.threshold, pool)?;
        Some(evaluate_bits(&pred.bits, &bits_of(labels, idx))?)
    } else {
        None
    };
    let mut train_tiles = out.split.train.clone();
    train_tiles.sort_unstable();
    let report = TrainReport {
        train_tiles,
        test_tiles: idx.len(),
        log: out.log,
        test,
        rotated_test,
    };
    Ok((out.params, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub model: LabelEval,
    pub majority: LabelEval,
    pub bernoulli: LabelEval,
}

/// The model against the statistical baselines on the held-out split the
/// model was trained with.
pub fn eval_labels(
    params: &ModelParams,
    tiles: &[TileImage],
    labels: &[MetaLabel],
    tc: &TrainConfig,
    pool: &Pool,
) -> Result<LabelReport> {
    if tiles.len() != labels.len() {
        return Err(Error::Invalid(format!(
            "{} tiles but {} labels",
            tiles.len(),
            labels.len()
        )));
    }
    let split = DataSplit::new(tiles.len(), tc.split, tc.fraction, tc.seed)?;
    let idx = if split.test.is_empty() {
        &split.train
    } else {
        &split.test
    };
    let truth = bits_of(labels, idx);
    let stat = StatBaseline::fit(&bits_of(labels, &split.train), NUM_LABELS)?;
    let baseline = |mode| evaluate_bits(&stat.predict(idx.len(), mode, tc.seed), &truth);
    Ok(LabelReport {
        model: evaluate_model(params, tiles, labels, idx, tc.threshold, pool)?,
        majority: baseline(BaselineMode::Majority)?,
        bernoulli: baseline(BaselineMode::Bernoulli)?,
    })
}

pub fn embed(params: &ModelParams, corpus: &TileCorpus, pool: &Pool) -> Result<EmbeddingMatrix> {
    Ok(embed_corpus_with(params, corpus, pool)?)
}

/// Labels aligned with the rows of `matrix`.
pub fn row_labels(matrix: &EmbeddingMatrix, set: &LabelSet) -> Result<Vec<MetaLabel>> {
    matrix
        .manifest()
        .iter()
        .map(|m| record_for(set, m.n)?.meta_label())
        .collect()
}

fn record_for(set: &LabelSet, n: usize) -> Result<&LabelRecord> {
    set.records
        .get(n)
        .ok_or_else(|| Error::Invalid(format!("no labels for tile {n}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcwSummary {
    pub icw: u32,
    pub groups: usize,
    pub vectors: usize,
    pub classes: Vec<String>,
    /// Calinski-Harabasz index of the feature vectors grouped by class;
    /// absent with fewer than two classes.
    pub ch: Option<f64>,
    /// The same index on the two-dimensional projection.
    pub ch_projected: Option<f64>,
    pub explained: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Semantics {
    pub vectors: Vec<FeatureVectorRow>,
    pub projection: Vec<ProjectionRow>,
    pub summaries: Vec<IcwSummary>,
}

fn cluster_index(points: &[Vec<f64>], classes: &[usize]) -> Result<Option<f64>> {
    let distinct: std::collections::BTreeSet<_> = classes.iter().collect();
    if distinct.len() < 2 || points.len() <= distinct.len() {
        return Ok(None);
    }
    let ch = ch_index(points, classes)?;
    // JSON has no infinity, so a zero within-class scatter is reported as the largest float
    Ok(Some(if ch.is_finite() { ch } else { f64::MAX }))
}

pub fn semantics(
    matrix: &EmbeddingMatrix,
    labels: &[MetaLabel],
    cfg: &SemanticsConfig,
    seed: u64,
) -> Result<Semantics> {
    let mut out = Semantics::default();
    for &icw in &cfg.icw {
        let groups = build_icw_groups(labels, icw);
        let set = class_feature_vectors(&groups, matrix, seed)?;
        let points: Vec<Vec<f64>> = set.vectors.iter().map(|v| v.values.clone()).collect();
        let classes: Vec<usize> = set.vectors.iter().map(|v| v.class_id).collect();
        out.vectors
            .extend(set.vectors.iter().map(|v| FeatureVectorRow {
                class: v.class_id,
                icw,
                vec: v.values.clone(),
            }));
        let (ch_projected, explained) = match pca_project(&points, 2) {
            Ok(p) => {
                out.projection
                    .extend(
                        p.points
                            .iter()
                            .zip(&classes)
                            .map(|(xy, &class)| ProjectionRow {
                                class,
                                icw,
                                x: xy[0],
                                y: xy[1],
                            }),
                    );
                (cluster_index(&p.points, &classes)?, p.ratios)
            }
            Err(_) => (None, Vec::new()),
        };
        out.summaries.push(IcwSummary {
            icw,
            groups: groups.len(),
            vectors: set.vectors.len(),
            classes: set
                .classes()
                .into_iter()
                .map(|c| LABEL_NAMES[c].to_string())
                .collect(),
            ch: cluster_index(&points, &classes)?,
            ch_projected,
            explained,
        });
    }
    Ok(out)
}

/// Feature rows aligned with the matrix rows: the embedding, then the
/// selected blocks.
pub fn port_features(
    matrix: &EmbeddingMatrix,
    set: &LabelSet,
    sel: FeatureSelector,
) -> Result<Features> {
    let rows = matrix
        .manifest()
        .iter()
        .map(|m| {
            let r = record_for(set, m.n)?;
            let mut row = matrix.row(m.row).to_vec();
            if sel.metadata {
                row.extend(r.counts.as_features());
            }
            if sel.meta_label {
                row.extend(r.label.iter().map(|&b| f64::from(b)));
            }
            if sel.poi {
                row.extend(r.poi.iter().map(|&c| f64::from(c)));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Features::from_rows(&rows)?)
}

/// Port records on the matrix rows nearest to each listed location.
pub fn resolve_ports(rows: &[PortRow], tiles: &[Location]) -> Result<Vec<PortRecord>> {
    rows.iter()
        .map(|r| {
            let location = Location::new(r.lat, r.lon)?;
            let tile = nearest_tile(tiles, location)
                .ok_or_else(|| Error::Invalid("no tiles to place ports on".into()))?;
            Ok(PortRecord {
                location,
                start_month: r.start_month,
                tile,
            })
        })
        .collect()
}

pub fn resolve_flows(rows: &[FlowRow], tiles: &[Location]) -> Result<Vec<FlowRecord>> {
    rows.iter()
        .map(|r| {
            let location = Location::new(r.lat, r.lon)?;
            let tile = nearest_tile(tiles, location)
                .ok_or_else(|| Error::Invalid("no tiles to place flows on".into()))?;
            Ok(FlowRecord {
                location,
                tile,
                hourly_mean: r.hourly_mean,
            })
        })
        .collect()
}

/// The exclusion distance and the candidate rows it leaves.
pub fn candidates(
    tiles: &[Location],
    ports: &[PortRecord],
    km: Option<f64>,
    quantile: f64,
) -> Result<(f64, Vec<usize>)> {
    let port_locs: Vec<Location> = ports.iter().map(|p| p.location).collect();
    let km = match km {
        Some(km) => km,
        None => pairwise_distance_quantile(&port_locs, quantile)?,
    };
    let set = build_candidate_set(tiles, &port_locs, km)?;
    if set.tiles.is_empty() {
        return Err(Error::Invalid(format!(
            "no candidate tiles lie {km} km from every port"
        )));
    }
    Ok((km, set.tiles))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyReport {
    pub exclusion_km: f64,
    pub ports: usize,
    pub candidates: usize,
    pub series: IdentificationSeries,
}

pub fn identify_ports(
    features: &Features,
    tiles: &[Location],
    ports: &[PortRecord],
    (km, quantile): (Option<f64>, f64),
    samples: usize,
    logreg: &LogRegConfig,
    seed: u64,
) -> Result<IdentifyReport> {
    let (exclusion_km, cands) = candidates(tiles, ports, km, quantile)?;
    let series = temporal_identification(ports, &cands, features, samples, logreg, seed)?;
    Ok(IdentifyReport {
        exclusion_km,
        ports: ports.len(),
        candidates: cands.len(),
        series,
    })
}

/// The `m` best-scoring candidates as output rows.
#[allow(clippy::too_many_arguments)]
pub fn recommend(
    features: &Features,
    matrix: &EmbeddingMatrix,
    ports: &[PortRecord],
    (km, quantile): (Option<f64>, f64),
    samples: usize,
    m: usize,
    logreg: &LogRegConfig,
    seed: u64,
) -> Result<Vec<RecommendationRow>> {
    let tiles: Vec<Location> = matrix.manifest().iter().map(|r| r.location()).collect();
    let (_, cands) = candidates(&tiles, ports, km, quantile)?;
    let port_rows: Vec<usize> = ports.iter().map(|p| p.tile).collect();
    let scores = candidate_scores(features, &port_rows, &cands, samples, logreg, seed)?;
    let ranked = rank_candidates(&cands, &scores, m.min(cands.len()))?;
    Ok(ranked
        .into_iter()
        .map(|r| {
            let row = &matrix.manifest()[r.tile];
            RecommendationRow {
                rank: r.rank,
                n: row.n,
                lat: row.lat,
                lon: row.lon,
                score: r.score,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectSummary {
    pub lists: usize,
    /// Length of the shortest list.
    pub m_star: usize,
    pub shared: usize,
    pub ratio: f64,
}

/// Tiles on every list, with the shared count relative to the shortest
/// list.
pub fn intersect(
    lists: &[Vec<RecommendationRow>],
) -> Result<(Vec<SharedPickRow>, IntersectSummary)> {
    let mut places = BTreeMap::new();
    let recs: Vec<Vec<Recommendation>> = lists
        .iter()
        .map(|l| {
            l.iter()
                .map(|r| {
                    places.entry(r.n).or_insert((r.lat, r.lon));
                    Recommendation {
                        rank: r.rank,
                        tile: r.n,
                        score: r.score,
                    }
                })
                .collect()
        })
        .collect();
    let picks = intersect_recommendations(&recs)?;
    let m_star = lists.iter().map(Vec::len).min().unwrap_or(0);
    let rows: Vec<SharedPickRow> = picks
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (lat, lon) = places[&p.tile];
            SharedPickRow {
                rank: i + 1,
                n: p.tile,
                lat,
                lon,
                mean_rank: p.mean_rank,
            }
        })
        .collect();
    let ratio = if m_star == 0 {
        0.0
    } else {
        rows.len() as f64 / m_star as f64
    };
    Ok((
        rows,
        IntersectSummary {
            lists: lists.len(),
            m_star,
            shared: picks.len(),
            ratio,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiEvaluation {
    pub vocabulary: Vec<String>,
    pub reference_means: Vec<f64>,
    pub recommended_means: Vec<f64>,
    #[serde(flatten)]
    pub report: PoiReport,
}

/// POI statistics of the recommended tiles against the port tiles.
pub fn eval_poi(
    set: &LabelSet,
    port_tiles: &[usize],
    recommended: &[usize],
) -> Result<PoiEvaluation> {
    let vectors = |tiles: &[usize]| -> Result<Vec<&[u32]>> {
        tiles
            .iter()
            .map(|&n| Ok(record_for(set, n)?.poi.as_slice()))
            .collect()
    };
    let reference_means = poi_count_means(&vectors(port_tiles)?)?;
    let recommended_means = poi_count_means(&vectors(recommended)?)?;
    let report = evaluate_recommendation(&reference_means, &recommended_means)?;
    Ok(PoiEvaluation {
        vocabulary: set.vocabulary.names().to_vec(),
        reference_means,
        recommended_means,
        report,
    })
}

/// Flow classification with the embedding, the meta features, both, and
/// the POI counts.
pub fn flow(
    matrix: &EmbeddingMatrix,
    set: &LabelSet,
    flows: &[FlowRecord],
    threshold: f64,
    logreg: &LogRegConfig,
    seed: u64,
) -> Result<FlowReport> {
    let meta = FeatureSelector {
        metadata: true,
        meta_label: true,
        poi: false,
    };
    let full = port_features(matrix, set, meta)?;
    let e = matrix.dim();
    let pick = |cols: std::ops::Range<usize>| -> Result<Features> {
        let rows: Vec<Vec<f64>> = flows
            .iter()
            .map(|f| full.row(f.tile)[cols.clone()].to_vec())
            .collect();
        Ok(Features::from_rows(&rows)?)
    };
    let poi_rows: Vec<Vec<f64>> = flows
        .iter()
        .map(|f| {
            Ok(record_for(set, matrix.manifest()[f.tile].n)?
                .poi
                .iter()
                .map(|&c| f64::from(c))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut modes = vec![
        ("embedding".to_string(), pick(0..e)?),
        ("meta".to_string(), pick(e..full.dim())?),
        ("embedding+meta".to_string(), pick(0..full.dim())?),
    ];
    if poi_rows.first().is_some_and(|r| !r.is_empty()) {
        modes.push(("poi".to_string(), Features::from_rows(&poi_rows)?));
    }
    let labels = flow_labels(
        &flows.iter().map(|f| f.hourly_mean).collect::<Vec<_>>(),
        threshold,
    );
    Ok(flow_prediction(&modes, &labels, logreg, seed)?)
}

/// Reads every saved Overpass response of a corpus, in manifest order.
pub fn read_docs(dir: &Path, count: usize, pool: &Pool) -> Result<Vec<Vec<Tags>>> {
    pool.try_map(count, |n| {
        crate::formats::overpass::read_elements(
            &dir.join(crate::formats::overpass::meta_file_name(n)),
        )
    })
}
