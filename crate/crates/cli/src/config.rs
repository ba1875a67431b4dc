//! Per-subcommand JSON configs. Relative paths inside a config resolve
//! against the directory holding the config file.

use std::path::{Path, PathBuf};

use pitomo_core::geometry::Grid;
use pitomo_core::network::{Activation, Backbone, InputRepr};
use pitomo_core::phantom::{NoiseSpec, PhantomRule};
use pitomo_core::trainer::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Reads and parses a config; both failures are configuration errors.
pub fn load<C: DeserializeOwned>(path: &Path) -> CliResult<(C, PathBuf)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    let cfg = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn d_subrays() -> usize {
    5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenCmatrixConfig {
    pub grid: Grid,
    /// JSON array of chord records.
    #[serde(default)]
    pub chords_file: Option<PathBuf>,
    /// Built-in two-camera fan with this many chords.
    #[serde(default)]
    pub two_camera: Option<usize>,
    #[serde(default = "d_subrays")]
    pub subrays: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenPhantomConfig {
    pub cmatrix: PathBuf,
    pub count: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub rule: PhantomRule,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// Needed only when the matrix manifest does not record its grid.
    #[serde(default)]
    pub grid: Option<Grid>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssessConfig {
    pub dataset: PathBuf,
    pub cmatrix: PathBuf,
    #[serde(default)]
    pub per_sample: bool,
}

fn d_ratios() -> [f64; 3] {
    [0.7, 0.15, 0.15]
}
fn d_split_seed() -> u64 {
    7
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "d_ratios")]
    pub ratios: [f64; 3],
    #[serde(default = "d_split_seed")]
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { ratios: d_ratios(), seed: d_split_seed() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Train,
    Valid,
    #[default]
    Test,
    /// The whole dataset, no split.
    All,
}

fn d_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone: Backbone,
    pub use_pi: bool,
    pub final_activation: Activation,
    #[serde(default)]
    pub input_repr: InputRepr,
    #[serde(default = "d_true")]
    pub batch_norm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    pub name: String,
    pub dataset: PathBuf,
    pub cmatrix: PathBuf,
    #[serde(default)]
    pub split: SplitConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalModel {
    pub checkpoint: PathBuf,
    /// Row label; defaults to the architecture name.
    #[serde(default)]
    pub label: Option<String>,
}

fn d_dataset_name() -> String {
    "dataset".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub dataset: PathBuf,
    pub cmatrix: PathBuf,
    #[serde(default = "d_dataset_name")]
    pub dataset_name: String,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub part: Part,
    pub models: Vec<EvalModel>,
    #[serde(default)]
    pub samples: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackprojectConfig {
    pub cmatrix: PathBuf,
    /// Little-endian f32 blob of `m · numz · numr` predicted values.
    pub predictions: PathBuf,
}
