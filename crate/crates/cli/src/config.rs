//! TOML experiment configuration. One optional section per subcommand plus
//! common keys; unknown keys are rejected with their full path.
//!
//! Precedence: command-line flags, then file values, then defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sublearn::model::{LossKind, LossSpec};
use sublearn::solver::PredictorFamily;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub gen: Option<GenConfig>,
    pub fit: Option<FitConfig>,
    pub gap: Option<GapConfig>,
    pub schedule: Option<ScheduleConfig>,
    pub capacity: Option<CapacityConfig>,
    pub bounds: Option<BoundsConfig>,
    pub verify: Option<VerifyConfig>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().trim().to_string();
            if path == "." || path.is_empty() {
                CliError::Config(msg)
            } else {
                CliError::Config(format!("{path}: {msg}"))
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Loss settings shared by several sections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    #[serde(default)]
    pub lower: f64,
    #[serde(default = "one")]
    pub upper: f64,
}

fn one() -> f64 {
    1.0
}

impl LossConfig {
    pub fn spec(&self, key: &str) -> Result<LossSpec, CliError> {
        LossSpec::new(self.kind, self.lower, self.upper).map_err(|e| invalid(key, e))
    }
}

pub(crate) fn invalid(key: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {e}"))
}

/// Multi-label data, either an explicit table or random integer codes.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels<'a> {
    pub label_table: Option<&'a Vec<Vec<f64>>>,
    pub n_inputs: Option<usize>,
    pub labels_per_input: Option<usize>,
    pub n_levels: Option<usize>,
    pub noise_sd: f64,
}

macro_rules! labels_accessor {
    ($($t:ty),*) => {$(
        impl $t {
            pub fn labels(&self) -> Labels<'_> {
                Labels {
                    label_table: self.label_table.as_ref(),
                    n_inputs: self.n_inputs,
                    labels_per_input: self.labels_per_input,
                    n_levels: self.n_levels,
                    noise_sd: self.noise_sd,
                }
            }
        }
    )*};
}

labels_accessor!(GenConfig, FitConfig, GapConfig);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub label_table: Option<Vec<Vec<f64>>>,
    pub n_inputs: Option<usize>,
    pub labels_per_input: Option<usize>,
    pub n_levels: Option<usize>,
    #[serde(default)]
    pub noise_sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// Alternating minimization with restarts.
    Alternating,
    /// Exact block-wise search over label-and-mean lookup tables.
    Exhaustive,
    /// Exact traditional-risk minimization over the same tables.
    Erm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// CSV written by `gen`; mutually exclusive with the label keys.
    pub data: Option<PathBuf>,
    pub label_table: Option<Vec<Vec<f64>>>,
    pub n_inputs: Option<usize>,
    pub labels_per_input: Option<usize>,
    pub n_levels: Option<usize>,
    #[serde(default)]
    pub noise_sd: f64,
    pub subjects: usize,
    pub method: FitMethod,
    #[serde(default = "default_family")]
    pub family: PredictorFamily,
    pub loss: Option<LossConfig>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_family() -> PredictorFamily {
    PredictorFamily::Table
}

fn default_restarts() -> usize {
    20
}

fn default_max_iters() -> usize {
    100
}

fn default_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapConfig {
    pub label_table: Option<Vec<Vec<f64>>>,
    pub n_inputs: Option<usize>,
    pub labels_per_input: Option<usize>,
    pub n_levels: Option<usize>,
    #[serde(default)]
    pub noise_sd: f64,
    /// Number of random instances; each uses seed `seed + i`.
    #[serde(default = "one_usize")]
    pub instances: usize,
    #[serde(default = "default_gap_tol")]
    pub tol: f64,
}

fn one_usize() -> usize {
    1
}

fn default_gap_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub m_values: Vec<u64>,
    pub eps: f64,
    #[serde(default = "one")]
    pub bz: f64,
    #[serde(default = "one")]
    pub btau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Threshold,
    Interval,
}

/// `"complete"` or a number of linearly spaced thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridConfig {
    Named(GridName),
    Size(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridName {
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityConfig {
    pub family: FamilyKind,
    pub n_values: Vec<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_grid")]
    pub grid: GridConfig,
    #[serde(default)]
    pub lo: f64,
    #[serde(default = "one")]
    pub hi: f64,
    /// Equally spaced interval endpoints across `[lo, hi]`.
    #[serde(default = "default_endpoints")]
    pub endpoints: usize,
    #[serde(default = "default_max_dimension")]
    pub max_dimension: usize,
}

fn default_reps() -> usize {
    200
}

fn default_grid() -> GridConfig {
    GridConfig::Named(GridName::Complete)
}

fn default_endpoints() -> usize {
    41
}

fn default_max_dimension() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub m_values: Vec<u64>,
    pub l_values: Vec<u64>,
    pub eta: f64,
    pub h_tau: Option<u64>,
    pub h_z: Option<u64>,
    pub h_tau_2m: Option<f64>,
    pub h_z_2l: Option<f64>,
    #[serde(default = "one")]
    pub bz: f64,
    #[serde(default = "one")]
    pub btau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Instance {
    /// One constant predictor, labels 0 and 1, absolute loss.
    Bernoulli,
    /// The 16-candidate two-subject instance, squared loss.
    Conflict,
    /// Three coordinate predictors with risks 0.2, 0.5, 0.8.
    Coordinate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub instance: Instance,
    pub eps: f64,
    pub m_values: Vec<u64>,
    #[serde(default = "default_verify_reps")]
    pub reps: usize,
    /// Level for the consistency trace; skipped when absent.
    pub c: Option<f64>,
}

fn default_verify_reps() -> usize {
    2000
}
