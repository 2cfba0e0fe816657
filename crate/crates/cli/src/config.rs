//! Experiment configuration: a sectioned key-value file with command-line
//! overrides.
//!
//! The on-disk form is TOML restricted to flat `key = value` entries under
//! named sections. Unknown sections and keys are rejected so a typo fails
//! loudly instead of silently running defaults, and a parsed configuration
//! serializes back to an equivalent file: the round trip preserves every
//! value. Any command accepts `--config <file>`; flags override single
//! values on top of it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ddib_core::datasets::DatasetKind;
use ddib_core::schedule::ScheduleParams;
use ddib_core::scorenet::TrainConfig;
use ddib_core::{Error, Result};

/// One experiment, end to end: the shared noise schedule, the network shape,
/// training hyperparameters, solver resolution, dataset sampling, and where
/// artifacts land.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schedule: ScheduleSection,
    pub network: NetworkSection,
    pub training: TrainConfig,
    pub solve: SolveSection,
    pub datasets: DatasetsSection,
    pub output: OutputSection,
}

/// `[schedule]`: the linear-beta noise schedule shared by every model of an
/// experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let p = ScheduleParams::default();
        Self { steps: p.steps, beta_min: p.beta_min, beta_max: p.beta_max }
    }
}

impl ScheduleSection {
    pub fn params(&self) -> ScheduleParams {
        ScheduleParams { steps: self.steps, beta_min: self.beta_min, beta_max: self.beta_max }
    }
}

/// `[network]`: score-network architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: Vec<usize>,
    pub time_embed_dim: usize,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self { hidden: vec![128; 4], time_embed_dim: 64 }
    }
}

/// `[solve]`: how many DDIM transitions each encode/decode leg uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    pub n_steps: usize,
}

impl Default for SolveSection {
    fn default() -> Self {
        Self { n_steps: 500 }
    }
}

/// `[datasets]`: which 2D domains an experiment covers and how they are
/// sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetsSection {
    pub kinds: Vec<DatasetKind>,
    pub n: usize,
    pub seed: u64,
}

impl Default for DatasetsSection {
    fn default() -> Self {
        Self { kinds: DatasetKind::ALL.to_vec(), n: 4000, seed: 7 }
    }
}

/// `[output]`: default directory for generated artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Loads the configuration file, or the defaults when none is given.
pub fn load(path: Option<&Path>) -> Result<ExperimentConfig> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Parameter(format!("{}: {e}", path.display())))
}
