//! The pipeline configuration: one JSON document whose fields command-line
//! flags may override. Every output records the resolved configuration and
//! seed.

use std::path::{Path, PathBuf};

use esle_core::corpus::ProfileMix;
use esle_core::labels::LABEL_NAMES;
use esle_core::nnet::{NetworkConfig, TrainConfig};
use esle_core::portseek::{FeatureSelector, LogRegConfig, RecConfig, FLOW_THRESHOLD};
use serde::{Deserialize, Serialize};

use crate::formats::embedding::Dtype;
use crate::formats::read_json;
use crate::{Error, Result};

pub const SEED_ENV: &str = "ESLE_SEED";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub embedding: Option<PathBuf>,
    pub ports: Option<PathBuf>,
    pub flows: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Synthetic corpus on a regional mesh grid, with planted ports and flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub tiles: usize,
    pub size: usize,
    /// South-west grid corner.
    pub origin: (f64, f64),
    /// Nominal mesh step in meters.
    pub step_m: f64,
    pub mix: ProfileMix,
    /// Label names every port tile carries.
    pub port_profile: Vec<String>,
    /// Cap on planted ports; `None` plants a port on every profile tile.
    pub port_count: Option<usize>,
    pub horizon_months: u32,
    /// Label names that lift the hourly flow of a port.
    pub busy_labels: Vec<String>,
    /// Base hourly flow, lift on busy tiles and uniform noise half-width.
    pub flow_levels: (f64, f64, f64),
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            tiles: 2000,
            size: 64,
            origin: (35.60, 139.60),
            step_m: 500.0,
            mix: ProfileMix::default(),
            port_profile: vec!["building_more".into(), "road_more".into()],
            port_count: None,
            horizon_months: 12,
            busy_labels: vec!["rail_station".into(), "railway".into(), "highway".into()],
            flow_levels: (16.0, 16.0, 10.0),
        }
    }
}

/// Packs label names into label bits.
pub fn label_mask(names: &[String]) -> Result<u32> {
    names.iter().try_fold(0u32, |mask, name| {
        let i = LABEL_NAMES
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| Error::Invalid(format!("unknown label {name:?}")))?;
        Ok(mask | 1 << i)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub embedding_dim: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self { embedding_dim: 32 }
    }
}

impl NetworkSpec {
    /// The baseline network for square tiles of side `size`.
    pub fn network(&self, size: usize) -> NetworkConfig {
        NetworkConfig::baseline(size, self.embedding_dim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemanticsConfig {
    pub icw: Vec<u32>,
}

impl Default for SemanticsConfig {
    fn default() -> Self {
        Self { icw: vec![0, 1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortsConfig {
    /// Candidates lie at least this far from every port.
    pub exclusion_km: Option<f64>,
    /// Without `exclusion_km`, this quantile of the pairwise port
    /// distances is the exclusion distance.
    pub exclusion_quantile: f64,
    /// Balanced samples per identification or recommendation run.
    pub samples: usize,
    pub logreg: LogRegConfig,
    pub list_len: usize,
    pub features: FeatureSelector,
    /// Named configurations for `ports recommend --name`.
    pub recommend: Vec<RecConfig>,
    pub flow_threshold: f64,
}

impl Default for PortsConfig {
    fn default() -> Self {
        Self {
            exclusion_km: None,
            exclusion_quantile: 0.1,
            samples: 50,
            logreg: LogRegConfig::default(),
            list_len: 100,
            features: FeatureSelector::default(),
            recommend: RecConfig::four_way(32, 16, 100),
            flow_threshold: FLOW_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed of every random choice; see [`resolve_seed`].
    pub seed: Option<u64>,
    pub paths: Paths,
    pub generate: GenerateConfig,
    pub network: NetworkSpec,
    pub train: TrainConfig,
    pub dtype: Dtype,
    pub semantics: SemanticsConfig,
    pub ports: PortsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: None,
            paths: Paths::default(),
            generate: GenerateConfig::default(),
            network: NetworkSpec::default(),
            train: TrainConfig {
                batch_size: 8,
                epochs: 10,
                learning_rate: 5e-4,
                rotate: true,
                ..TrainConfig::default()
            },
            dtype: Dtype::F64,
            semantics: SemanticsConfig::default(),
            ports: PortsConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), read_json)
    }
}

/// The flag seed, else the configured seed, else `ESLE_SEED`, else 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(0),
        Err(e) => Err(Error::Invalid(format!("{SEED_ENV}: {e}"))),
    }
}

/// Provenance written next to, or inside, every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: PipelineConfig,
}

impl RunHeader {
    pub fn new(command: &str, config: &PipelineConfig) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed.unwrap_or(0),
            config: config.clone(),
        }
    }
}
