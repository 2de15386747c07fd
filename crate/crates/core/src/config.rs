//! TOML run configuration shared by the command line and the service.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{RewardSpec, SSR_THRESHOLD};
use crate::motion_data::SynthConfig;
use crate::scheduler::SchedulerConfig;
use crate::skill_graph::GraphConfig;
use crate::tracker_sim::{Difficulty, ScriptParams, TrackerConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub trials: usize,
    pub levels: Vec<Difficulty>,
    pub script: ScriptParams,
    pub ssr_threshold: f64,
    /// Evaluate on the graph with every cross segment removed.
    pub no_cross_edges: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            trials: 50,
            levels: Difficulty::ALL.to_vec(),
            script: ScriptParams::default(),
            ssr_threshold: SSR_THRESHOLD,
            no_cross_edges: false,
        }
    }
}

/// Everything a run needs besides its input files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub graph: GraphConfig,
    pub scheduler: SchedulerConfig,
    pub tracker: TrackerConfig,
    pub eval: EvalConfig,
    pub reward: RewardSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable in TOML")
    }
}
