use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::nn::{Gradients, ModelParams, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::adam(1e-3)
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate,
            ..OptimizerConfig::adam(learning_rate)
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate)));
        }
        if self.kind == OptimizerKind::Adam
            && !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.epsilon > 0.0)
        {
            return Err(Error::config("adam requires beta1, beta2 in [0, 1) and epsilon > 0"));
        }
        Ok(())
    }
}

/// Serializable part of an optimizer's state (everything but the moment
/// vectors).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Snapshot {
    config: OptimizerConfig,
    step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<F> {
    config: OptimizerConfig,
    m: Vec<F>,
    v: Vec<F>,
    step: u64,
}

impl<F: Real> OptimizerState<F> {
    pub fn new(config: OptimizerConfig, len: usize) -> Self {
        let moments = if config.kind == OptimizerKind::Adam { len } else { 0 };
        OptimizerState {
            config,
            m: vec![F::zero(); moments],
            v: vec![F::zero(); moments],
            step: 0,
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Number of updates applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// SGD: `p - lr·g`. Adam: bias-corrected first/second moment update.
    /// Fails without touching `params` if any gradient entry is not finite.
    pub fn update(&mut self, params: &mut ModelParams<F>, grads: &Gradients<F>) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Dimension {
                what: "gradient length",
                expected: params.len(),
                actual: grads.len(),
            });
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite {
                step: self.step,
                what: "gradient".into(),
            });
        }
        let lr = F::of(self.config.learning_rate);
        self.step += 1;
        match self.config.kind {
            OptimizerKind::Sgd => params.add_scaled(grads, -lr),
            OptimizerKind::Adam => {
                if self.m.len() != params.len() {
                    return Err(Error::Dimension {
                        what: "adam moment length",
                        expected: params.len(),
                        actual: self.m.len(),
                    });
                }
                let c = &self.config;
                let t = self.step as i32;
                let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
                let corr1 = F::of(1.0 - c.beta1.powi(t));
                let corr2 = F::of(1.0 - c.beta2.powi(t));
                let eps = F::of(c.epsilon);
                let p = params.as_mut_slice();
                for (i, &g) in grads.as_slice().iter().enumerate() {
                    self.m[i] = b1 * self.m[i] + (F::one() - b1) * g;
                    self.v[i] = b2 * self.v[i] + (F::one() - b2) * g * g;
                    let m_hat = self.m[i] / corr1;
                    let v_hat = self.v[i] / corr2;
                    p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }

    /// Header value and moment vectors for a checkpoint.
    pub fn to_parts(&self) -> (Value, Vec<Vec<F>>) {
        let snap = Snapshot {
            config: self.config,
            step: self.step,
        };
        let moments = match self.config.kind {
            OptimizerKind::Sgd => Vec::new(),
            OptimizerKind::Adam => vec![self.m.clone(), self.v.clone()],
        };
        (serde_json::to_value(snap).expect("plain struct serializes"), moments)
    }

    pub fn from_parts(header: &Value, moments: &[Vec<F>], len: usize) -> Result<Self> {
        let snap: Snapshot = serde_json::from_value(header.clone())?;
        let mut state = OptimizerState::new(snap.config, len);
        state.step = snap.step;
        if snap.config.kind == OptimizerKind::Adam {
            match moments {
                [m, v] if m.len() == len && v.len() == len => {
                    state.m = m.clone();
                    state.v = v.clone();
                }
                _ => return Err(Error::Format("adam checkpoint needs two moment vectors".into())),
            }
        }
        Ok(state)
    }
}
