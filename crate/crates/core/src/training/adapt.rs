use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{tbptt_gradients, ModelParams, Real, SequenceRef};

/// Per-task fine-tuning: `epochs` full-batch gradient steps of plain SGD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptConfig {
    pub lr: f64,
    pub epochs: usize,
    pub trunc_len: usize,
    pub w: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            lr: 0.1,
            epochs: 1,
            trunc_len: 128,
            w: 9.0,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("adapt.lr must be > 0, got {}", self.lr)));
        }
        if self.trunc_len == 0 {
            return Err(Error::config("adapt.trunc_len must be >= 1"));
        }
        if !(self.w > 0.0) {
            return Err(Error::config("adapt.w must be > 0"));
        }
        Ok(())
    }
}

/// Adapts `init` to one device's training prefix. Each epoch is one gradient
/// step on the masked mean loss of the whole prefix, run from the zero state
/// with truncated BPTT.
pub fn adapt<F: Real>(init: &ModelParams<F>, data: SequenceRef<'_>, cfg: &AdaptConfig) -> Result<ModelParams<F>> {
    cfg.validate()?;
    let mut phi = init.clone();
    if cfg.epochs == 0 {
        return Ok(phi);
    }
    if data.valid_count() == 0 {
        return Err(Error::EmptyTargets);
    }
    let lr = F::of(cfg.lr);
    for epoch in 0..cfg.epochs {
        let out = tbptt_gradients(&phi, data, F::of(cfg.w), cfg.trunc_len)?;
        if !out.grads.is_finite() {
            return Err(Error::NonFinite {
                step: epoch as u64,
                what: "adaptation gradient".into(),
            });
        }
        phi.add_scaled(&out.grads, -lr);
    }
    Ok(phi)
}
