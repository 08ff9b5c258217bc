//! Run configuration: one TOML file covering every pipeline stage.
//!
//! ```toml
//! seed = 7
//! deterministic = true
//! threads = 0          # 0: all available cores
//!
//! [scenario]           # ScenarioDistribution
//! devices = 10
//!
//! [dataset]
//! tasks = 20
//! slots = 2000
//! mode = "any"
//! xi = 0
//! tau = 25
//!
//! [model]
//! hidden_in = 32
//! lstm_units = 32
//! hidden_out = 32
//!
//! [meta]               # MetaConfig
//! [joint]              # JointConfig
//! [adapt]              # AdaptConfig
//! [eval]               # EvalConfig
//! ```
//!
//! Every table is optional and every key has a default. Unknown keys are
//! errors. The `seed` keys of `[meta]` and `[joint]` are always replaced by
//! the master seed when the config is resolved.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::write_atomic;
use crate::dataset::{GenerationConfig, LabelMode, LabelSpec};
use crate::error::{Error, Result};
use crate::evaluation::EvalConfig;
use crate::nn::ModelDims;
use crate::scenario::ScenarioDistribution;
use crate::seed::{derive_seed, purpose};
use crate::training::{AdaptConfig, JointConfig, MetaConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub tasks: usize,
    pub slots: usize,
    pub mode: LabelMode,
    pub xi: usize,
    pub tau: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            tasks: 100,
            slots: 10_000,
            mode: LabelMode::Any,
            xi: 0,
            tau: 25,
        }
    }
}

impl DatasetSection {
    pub fn labels(&self) -> LabelSpec {
        LabelSpec {
            mode: self.mode,
            xi: self.xi,
            tau: self.tau,
        }
    }
}

/// Layer widths; the input width follows from the number of devices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden_in: usize,
    pub lstm_units: usize,
    pub hidden_out: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hidden_in: 128,
            lstm_units: 128,
            hidden_out: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub deterministic: bool,
    pub threads: usize,
    pub scenario: ScenarioDistribution,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub meta: MetaConfig,
    pub joint: JointConfig,
    pub adapt: AdaptConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    /// Propagates the master seed into the stage configs and validates the
    /// result.
    pub fn resolve(mut self) -> Result<Self> {
        self.meta.seed = self.seed;
        self.joint.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.dataset.labels().validate()?;
        if self.dataset.tasks == 0 || self.dataset.slots == 0 {
            return Err(Error::config("dataset.tasks and dataset.slots must be >= 1"));
        }
        self.dims().validate()?;
        self.meta.validate()?;
        self.joint.validate()?;
        self.adapt.validate()?;
        self.eval.validate()
    }

    pub fn generation(&self) -> GenerationConfig {
        GenerationConfig {
            scenario: self.scenario.clone(),
            tasks: self.dataset.tasks,
            slots: self.dataset.slots,
            labels: self.dataset.labels(),
            seed: self.seed,
        }
    }

    pub fn dims_for(&self, devices: usize) -> ModelDims {
        ModelDims {
            input_dim: 2 * devices,
            hidden_in: self.model.hidden_in,
            lstm_units: self.model.lstm_units,
            hidden_out: self.model.hidden_out,
        }
    }

    pub fn dims(&self) -> ModelDims {
        self.dims_for(self.scenario.devices)
    }

    /// Seed of the trained models' starting weights.
    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, purpose::INIT, 0)
    }

    /// Seed of the untrained baseline's weights.
    pub fn random_init_seed(&self) -> u64 {
        derive_seed(self.seed, purpose::RANDOM_INIT, 0)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes to JSON")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        Ok(serde_json::from_value(value.clone())?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_toml().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default().resolve().unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = RunConfig::from_toml("seed = 1\n[meta]\nalpah = 0.1\n").unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("alpah")), "{err}");
        assert!(RunConfig::from_toml("sede = 1\n").is_err());
    }

    #[test]
    fn master_seed_reaches_the_trainers() {
        let cfg = RunConfig::from_toml("seed = 42\n[meta]\nseed = 3\n").unwrap().resolve().unwrap();
        assert_eq!((cfg.meta.seed, cfg.joint.seed), (42, 42));
        assert_ne!(cfg.init_seed(), cfg.random_init_seed());
    }
}
