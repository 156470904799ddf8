//! Command-line front end. Flags override the configuration file, and
//! every output records the resolved configuration and seed, either inline
//! (JSON reports) or in a `<output>.run.json` sidecar.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use esle_core::corpus::Location;
use esle_core::labels::MetaLabel;
use esle_core::portseek::FeatureSelector;
use serde::Serialize;

use crate::config::{resolve_seed, PipelineConfig, RunHeader};
use crate::exec::Pool;
use crate::formats::embedding::Dtype;
use crate::formats::labels::{read_labels, write_labels, LabelSet};
use crate::formats::tables::{
    read_csv, write_csv, FlowRow, PortRow, RecommendationRow, FLOW_COLUMNS, PORT_COLUMNS,
    PROJECTION_COLUMNS,
};
use crate::formats::{
    checkpoint, corpus, embedding, overpass, read_jsonl, write_json, write_jsonl,
};
use crate::pipeline;
use crate::{Error, Result};

/// Planted ports and flows inside a generated corpus directory.
pub const PORTS_FILE: &str = "ports.csv";
pub const FLOWS_FILE: &str = "flows.csv";

#[derive(Debug, Parser)]
#[command(
    name = "esle",
    version,
    about = "Location embeddings from map tiles, and port seeking with them"
)]
pub struct Cli {
    /// Pipeline configuration (JSON); flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; defaults to the configuration, then ESLE_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic tile corpus with saved tag data, ports and flows.
    GenTiles(GenTilesArgs),
    /// Count meta classes, binarize them and count POIs.
    Label(LabelArgs),
    /// Train the label network.
    Train(TrainArgs),
    /// Embed every tile of a corpus.
    Embed(EmbedArgs),
    /// Evaluate label predictions against statistical baselines.
    EvalLabels(EvalLabelsArgs),
    /// Class feature vectors, their projection and cluster scores.
    Semantics(SemanticsArgs),
    /// Port identification and recommendation.
    #[command(subcommand)]
    Ports(PortsCommand),
}

#[derive(Debug, Args)]
pub struct GenTilesArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of tiles.
    #[arg(long)]
    pub n: Option<usize>,
    /// Tile side in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    /// Cap on planted ports; every tile with the port profile by default.
    #[arg(long)]
    pub ports: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Rule table (JSON); defaults to the built-in table.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Checkpoint to write; the log and report are written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Train on this share of the training split.
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Share of the corpus used for training.
    #[arg(long)]
    pub split: Option<f64>,
    /// Rotate training tiles at random.
    #[arg(long)]
    pub rotate: Option<bool>,
    /// Also evaluate on rotated test tiles.
    #[arg(long)]
    pub rotate_test: bool,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub dtype: Option<Dtype>,
}

#[derive(Debug, Args)]
pub struct EvalLabelsArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SemanticsArgs {
    #[arg(long)]
    pub embedding: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Interfering class weights to analyse; repeatable.
    #[arg(long)]
    pub icw: Vec<u32>,
}

#[derive(Debug, Subcommand)]
pub enum PortsCommand {
    /// Separate port tiles from candidates month by month.
    Identify(IdentifyArgs),
    /// Rank candidate tiles as new port sites.
    Recommend(RecommendArgs),
    /// Tiles shared by every recommendation list.
    Intersect(IntersectArgs),
    /// Compare POI statistics of recommended and port tiles.
    EvalPoi(EvalPoiArgs),
    /// Predict high and low flow ports.
    Flow(FlowArgs),
}

#[derive(Debug, Args)]
pub struct PortInputs {
    #[arg(long)]
    pub embedding: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub ports: Option<PathBuf>,
    /// Candidates lie at least this far from every port.
    #[arg(long)]
    pub exclusion_km: Option<f64>,
    /// Balanced samples per fit.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Append the meta counts and label bits to the embedding.
    #[arg(long)]
    pub meta: bool,
    /// Append the POI counts to the embedding.
    #[arg(long)]
    pub poi: bool,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[command(flatten)]
    pub inputs: PortInputs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub inputs: PortInputs,
    /// Length of the list.
    #[arg(long)]
    pub list_len: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IntersectArgs {
    #[arg(required = true)]
    pub lists: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalPoiArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub ports: Option<PathBuf>,
    /// Recommendation or intersection list.
    #[arg(long)]
    pub recs: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[arg(long)]
    pub embedding: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub flows: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if flag.is_some() {
        slot.clone_from(flag);
    }
}

fn need<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| {
        Error::Invalid(format!(
            "missing --{what} (or paths.{what} in the configuration)"
        ))
    })
}

/// `path` with its last extension replaced by `suffix`.
fn beside(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.with_extension("").into_os_string();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn run_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    run: &'a RunHeader,
    #[serde(flatten)]
    body: &'a T,
}

fn write_report<T: Serialize>(path: &Path, header: &RunHeader, body: &T) -> Result<()> {
    write_json(path, &Report { run: header, body })
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    cfg.seed = Some(resolve_seed(cli.seed, cfg.seed)?);
    let seed = cfg.seed.unwrap_or(0);
    cfg.train.seed = seed;
    let pool = Pool::new(cli.threads)?;
    match cli.command {
        Command::GenTiles(a) => gen_tiles(cfg, a, seed, &pool),
        Command::Label(a) => label(cfg, a, &pool),
        Command::Train(a) => train(cfg, a, &pool),
        Command::Embed(a) => embed(cfg, a, &pool),
        Command::EvalLabels(a) => eval_labels(cfg, a, &pool),
        Command::Semantics(a) => semantics(cfg, a, seed),
        Command::Ports(p) => ports(cfg, p, seed),
    }
}

fn gen_tiles(mut cfg: PipelineConfig, a: GenTilesArgs, seed: u64, pool: &Pool) -> Result<()> {
    set(&mut cfg.generate.tiles, a.n);
    set(&mut cfg.generate.size, a.size);
    if a.ports.is_some() {
        cfg.generate.port_count = a.ports;
    }
    set_path(&mut cfg.paths.out, &a.out);
    let dir = need(&cfg.paths.out, "out")?.to_path_buf();
    let header = RunHeader::new("gen-tiles", &cfg);
    let g = pipeline::generate(&cfg.generate, seed, pool)?;
    corpus::write_corpus(&dir, &g.corpus)?;
    pool.try_map(g.corpus.len(), |n| {
        let loc = g.corpus.tiles()[n].location;
        overpass::write_document(&dir.join(overpass::meta_file_name(n)), &g.elements(n), loc)
    })?;
    write_csv(&dir.join(PORTS_FILE), &PORT_COLUMNS, &g.port_rows())?;
    write_csv(&dir.join(FLOWS_FILE), &FLOW_COLUMNS, &g.flow_rows())?;
    write_json(&dir.join("run.json"), &header)
}

fn label(mut cfg: PipelineConfig, a: LabelArgs, pool: &Pool) -> Result<()> {
    set_path(&mut cfg.paths.corpus, &a.corpus);
    set_path(&mut cfg.paths.rules, &a.rules);
    set_path(&mut cfg.paths.out, &a.out);
    let dir = need(&cfg.paths.corpus, "corpus")?;
    let out = need(&cfg.paths.out, "out")?;
    let rules = overpass::read_rules(cfg.paths.rules.as_deref())?;
    let manifest = corpus::read_manifest(dir)?;
    let docs = pipeline::read_docs(dir, manifest.len(), pool)?;
    let set = pipeline::label_tiles(&docs, &rules);
    write_labels(out, &set)?;
    write_json(&run_sidecar(out), &RunHeader::new("label", &cfg))
}

fn load_labeled(
    cfg: &PipelineConfig,
    pool: &Pool,
) -> Result<(esle_core::corpus::TileCorpus, LabelSet, Vec<MetaLabel>)> {
    let c = corpus::read_corpus(need(&cfg.paths.corpus, "corpus")?, pool)?;
    let set = read_labels(need(&cfg.paths.labels, "labels")?)?;
    if set.records.len() != c.len() {
        return Err(Error::Invalid(format!(
            "{} tiles but {} label records",
            c.len(),
            set.records.len()
        )));
    }
    let labels = set.labels()?;
    Ok((c, set, labels))
}

fn train(mut cfg: PipelineConfig, a: TrainArgs, pool: &Pool) -> Result<()> {
    set_path(&mut cfg.paths.corpus, &a.corpus);
    set_path(&mut cfg.paths.labels, &a.labels);
    set_path(&mut cfg.paths.model, &a.out);
    set(&mut cfg.network.embedding_dim, a.embedding_dim);
    set(&mut cfg.train.epochs, a.epochs);
    set(&mut cfg.train.batch_size, a.batch_size);
    set(&mut cfg.train.learning_rate, a.learning_rate);
    set(&mut cfg.train.split, a.split);
    set(&mut cfg.train.rotate, a.rotate);
    if a.fraction.is_some() {
        cfg.train.fraction = a.fraction;
    }
    let out = need(&cfg.paths.model, "out")?.to_path_buf();
    let (c, _, labels) = load_labeled(&cfg, pool)?;
    let size = c.tiles().first().map_or(0, |t| t.size());
    let network = cfg.network.network(size);
    let (params, report) = pipeline::train_model(
        c.tiles(),
        &labels,
        &network,
        &cfg.train,
        a.rotate_test,
        pool,
    )?;
    let header = RunHeader::new("train", &cfg);
    checkpoint::write(&out, &params, Some(&cfg.train))?;
    write_json(&run_sidecar(&out), &header)?;
    write_jsonl(&beside(&out, "log.jsonl"), &report.log)?;
    write_report(&beside(&out, "report.json"), &header, &report)
}

fn embed(mut cfg: PipelineConfig, a: EmbedArgs, pool: &Pool) -> Result<()> {
    set_path(&mut cfg.paths.corpus, &a.corpus);
    set_path(&mut cfg.paths.model, &a.model);
    set_path(&mut cfg.paths.embedding, &a.out);
    set(&mut cfg.dtype, a.dtype);
    let out = need(&cfg.paths.embedding, "out")?;
    let model = checkpoint::read(need(&cfg.paths.model, "model")?)?;
    let c = corpus::read_corpus(need(&cfg.paths.corpus, "corpus")?, pool)?;
    let matrix = pipeline::embed(&model.params, &c, pool)?;
    embedding::write(out, &matrix, cfg.dtype)?;
    write_json(&run_sidecar(out), &RunHeader::new("embed", &cfg))
}

fn eval_labels(mut cfg: PipelineConfig, a: EvalLabelsArgs, pool: &Pool) -> Result<()> {
    set_path(&mut cfg.paths.corpus, &a.corpus);
    set_path(&mut cfg.paths.labels, &a.labels);
    set_path(&mut cfg.paths.model, &a.model);
    set_path(&mut cfg.paths.out, &a.out);
    let out = need(&cfg.paths.out, "out")?;
    let model = checkpoint::read(need(&cfg.paths.model, "model")?)?;
    let tc = model.train.clone().unwrap_or_else(|| cfg.train.clone());
    let (c, _, labels) = load_labeled(&cfg, pool)?;
    let report = pipeline::eval_labels(&model.params, c.tiles(), &labels, &tc, pool)?;
    write_report(out, &RunHeader::new("eval-labels", &cfg), &report)
}

fn load_embedded(
    cfg: &PipelineConfig,
) -> Result<(esle_core::embed::EmbeddingMatrix, LabelSet, Vec<Location>)> {
    let matrix = embedding::read(need(&cfg.paths.embedding, "embedding")?)?;
    let set = read_labels(need(&cfg.paths.labels, "labels")?)?;
    let tiles = matrix.manifest().iter().map(|r| r.location()).collect();
    Ok((matrix, set, tiles))
}

fn semantics(mut cfg: PipelineConfig, a: SemanticsArgs, seed: u64) -> Result<()> {
    set_path(&mut cfg.paths.embedding, &a.embedding);
    set_path(&mut cfg.paths.labels, &a.labels);
    set_path(&mut cfg.paths.out, &a.out);
    if !a.icw.is_empty() {
        cfg.semantics.icw = a.icw;
    }
    let dir = need(&cfg.paths.out, "out")?;
    let (matrix, set, _) = load_embedded(&cfg)?;
    let labels = pipeline::row_labels(&matrix, &set)?;
    let s = pipeline::semantics(&matrix, &labels, &cfg.semantics, seed)?;
    let header = RunHeader::new("semantics", &cfg);
    write_jsonl(&dir.join("feature_vectors.jsonl"), &s.vectors)?;
    write_csv(
        &dir.join("projection.csv"),
        &PROJECTION_COLUMNS,
        &s.projection,
    )?;
    write_report(
        &dir.join("report.json"),
        &header,
        &serde_json::json!({ "icw": s.summaries }),
    )
}

fn apply_port_inputs(cfg: &mut PipelineConfig, i: &PortInputs) -> FeatureSelector {
    set_path(&mut cfg.paths.embedding, &i.embedding);
    set_path(&mut cfg.paths.labels, &i.labels);
    set_path(&mut cfg.paths.ports, &i.ports);
    if i.exclusion_km.is_some() {
        cfg.ports.exclusion_km = i.exclusion_km;
    }
    set(&mut cfg.ports.samples, i.samples);
    let f = &mut cfg.ports.features;
    f.metadata |= i.meta;
    f.meta_label |= i.meta;
    f.poi |= i.poi;
    *f
}

fn ports(mut cfg: PipelineConfig, cmd: PortsCommand, seed: u64) -> Result<()> {
    match cmd {
        PortsCommand::Identify(a) => {
            let sel = apply_port_inputs(&mut cfg, &a.inputs);
            set_path(&mut cfg.paths.out, &a.out);
            let out = need(&cfg.paths.out, "out")?;
            let (matrix, set, tiles) = load_embedded(&cfg)?;
            let ports = pipeline::resolve_ports(
                &read_csv::<PortRow>(need(&cfg.paths.ports, "ports")?)?,
                &tiles,
            )?;
            let features = pipeline::port_features(&matrix, &set, sel)?;
            let p = &cfg.ports;
            let report = pipeline::identify_ports(
                &features,
                &tiles,
                &ports,
                (p.exclusion_km, p.exclusion_quantile),
                p.samples,
                &p.logreg,
                seed,
            )?;
            write_report(out, &RunHeader::new("ports identify", &cfg), &report)
        }
        PortsCommand::Recommend(a) => {
            let sel = apply_port_inputs(&mut cfg, &a.inputs);
            set(&mut cfg.ports.list_len, a.list_len);
            set_path(&mut cfg.paths.out, &a.out);
            let out = need(&cfg.paths.out, "out")?;
            let (matrix, set, tiles) = load_embedded(&cfg)?;
            let ports = pipeline::resolve_ports(
                &read_csv::<PortRow>(need(&cfg.paths.ports, "ports")?)?,
                &tiles,
            )?;
            let features = pipeline::port_features(&matrix, &set, sel)?;
            let p = &cfg.ports;
            let rows = pipeline::recommend(
                &features,
                &matrix,
                &ports,
                (p.exclusion_km, p.exclusion_quantile),
                p.samples,
                p.list_len,
                &p.logreg,
                seed,
            )?;
            write_jsonl(out, &rows)?;
            write_json(&run_sidecar(out), &RunHeader::new("ports recommend", &cfg))
        }
        PortsCommand::Intersect(a) => {
            set_path(&mut cfg.paths.out, &a.out);
            let out = need(&cfg.paths.out, "out")?;
            let lists = a
                .lists
                .iter()
                .map(|p| read_jsonl::<RecommendationRow>(p))
                .collect::<Result<Vec<_>>>()?;
            let (rows, summary) = pipeline::intersect(&lists)?;
            write_jsonl(out, &rows)?;
            write_report(
                &run_sidecar(out),
                &RunHeader::new("ports intersect", &cfg),
                &summary,
            )
        }
        PortsCommand::EvalPoi(a) => {
            set_path(&mut cfg.paths.corpus, &a.corpus);
            set_path(&mut cfg.paths.labels, &a.labels);
            set_path(&mut cfg.paths.ports, &a.ports);
            set_path(&mut cfg.paths.out, &a.out);
            let out = need(&cfg.paths.out, "out")?;
            let manifest = corpus::read_manifest(need(&cfg.paths.corpus, "corpus")?)?;
            let tiles = manifest
                .iter()
                .map(|r| Location::new(r.lat, r.lon))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let set = read_labels(need(&cfg.paths.labels, "labels")?)?;
            let ports = pipeline::resolve_ports(
                &read_csv::<PortRow>(need(&cfg.paths.ports, "ports")?)?,
                &tiles,
            )?;
            let recs: Vec<serde_json::Value> = read_jsonl(&a.recs)?;
            let rec_tiles = recs
                .iter()
                .map(|r| {
                    r.get("n")
                        .and_then(serde_json::Value::as_u64)
                        .map(|n| n as usize)
                        .ok_or_else(|| {
                            Error::Invalid(format!(
                                "{}: record without a tile `n`",
                                a.recs.display()
                            ))
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            let port_tiles: Vec<usize> = ports.iter().map(|p| p.tile).collect();
            let report = pipeline::eval_poi(&set, &port_tiles, &rec_tiles)?;
            write_report(out, &RunHeader::new("ports eval-poi", &cfg), &report)
        }
        PortsCommand::Flow(a) => {
            set_path(&mut cfg.paths.embedding, &a.embedding);
            set_path(&mut cfg.paths.labels, &a.labels);
            set_path(&mut cfg.paths.flows, &a.flows);
            set_path(&mut cfg.paths.out, &a.out);
            let out = need(&cfg.paths.out, "out")?;
            let (matrix, set, tiles) = load_embedded(&cfg)?;
            let flows = pipeline::resolve_flows(
                &read_csv::<FlowRow>(need(&cfg.paths.flows, "flows")?)?,
                &tiles,
            )?;
            let p = &cfg.ports;
            let report = pipeline::flow(&matrix, &set, &flows, p.flow_threshold, &p.logreg, seed)?;
            write_report(out, &RunHeader::new("ports flow", &cfg), &report)
        }
    }
}
