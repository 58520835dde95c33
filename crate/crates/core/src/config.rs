//! Pipeline configuration, read from TOML. Every key is optional.
//!
//! ```toml
//! seed = 7
//! exec = "parallel"            # or "sequential"
//! exclusion_threshold = 0.30   # eyes-not-found share above which a learner is dropped
//!
//! [schema]                     # gaze export columns
//! delimiter = "\t"             # omit to detect
//! [schema.columns]
//! participant_id = "Participant ID"
//!
//! [dataset]
//! window_ms = 30000
//! min_saccades = 3
//! groups = ["G2", "G3"]
//! balance = true
//! class_cap = 524              # omit for no cap
//!
//! [heatmap]
//! screen_w = 1920.0
//! screen_h = 1080.0
//! width_cells = 96
//! height_cells = 54
//! weighting = "duration"       # or "count"
//! sigma_cells = 1.5
//!
//! [anova]
//! alpha = 0.05
//!
//! [models.forest]
//! n_trees = 100
//! max_features = 0             # 0 = ceil(sqrt(16))
//! min_leaf = 2
//!
//! [models.mlp]
//! epochs = 200
//! batch = 32
//! lr = 0.001
//! beta1 = 0.9
//! beta2 = 0.999
//! eps = 1e-8
//!
//! [evaluate]
//! protocol = "loocv"           # or "split75_25"
//! unit = "sample"              # or "learner"
//!
//! [synth]                      # see SynthConfig
//! learners = 12
//!
//! [service]
//! bind = "127.0.0.1:8080"
//! allowed_origin = "*"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::features::DatasetConfig;
use crate::heatmap::GridConfig;
use crate::ingest::{SchemaConfig, DEFAULT_EXCLUSION_THRESHOLD};
use crate::ml::{ModelConfig, Protocol, SplitUnit};
use crate::stats::DEFAULT_ALPHA;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnovaConfig {
    pub alpha: f64,
}

impl Default for AnovaConfig {
    fn default() -> Self {
        AnovaConfig { alpha: DEFAULT_ALPHA }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub protocol: Protocol,
    pub unit: SplitUnit,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { protocol: Protocol::Loocv, unit: SplitUnit::Sample }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    /// CORS origin for the dashboard; `*` allows any.
    pub allowed_origin: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { bind: "127.0.0.1:8080".into(), allowed_origin: "*".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub exec: Exec,
    pub exclusion_threshold: f64,
    pub schema: SchemaConfig,
    pub dataset: DatasetConfig,
    pub heatmap: GridConfig,
    pub anova: AnovaConfig,
    pub models: ModelConfig,
    pub evaluate: EvalConfig,
    pub synth: SynthConfig,
    pub service: ServiceConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 7,
            exec: Exec::default(),
            exclusion_threshold: DEFAULT_EXCLUSION_THRESHOLD,
            schema: SchemaConfig::default(),
            dataset: DatasetConfig::default(),
            heatmap: GridConfig::default(),
            anova: AnovaConfig::default(),
            models: ModelConfig::default(),
            evaluate: EvalConfig::default(),
            synth: SynthConfig::default(),
            service: ServiceConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Group;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn partial_overrides() {
        let c = Config::from_toml(
            "seed = 3\n[dataset]\nclass_cap = 524\ngroups = [\"G1\"]\n[models.forest]\nn_trees = 10\n[evaluate]\nprotocol = \"split75_25\"\n",
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.dataset.class_cap, Some(524));
        assert_eq!(c.dataset.groups, vec![Group::G1]);
        assert_eq!(c.dataset.window_ms, 30_000);
        assert_eq!(c.models.forest.n_trees, 10);
        assert_eq!(c.models.mlp.epochs, 200);
        assert_eq!(c.evaluate.protocol, Protocol::Split75_25);
        assert!(Config::from_toml("seed = \"x\"").is_err());
    }

    #[test]
    fn defaults_survive_toml() {
        let c = Config::default();
        assert_eq!(Config::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }
}
