use std::time::Instant;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::curve::CurveRow;
use super::optimizer::{OptimizerConfig, OptimizerState};
use super::ordered_mean;
use crate::dataset::MetaDataset;
use crate::error::{Error, Result};
use crate::nn::{chunked_gradients, Checkpoint, Lineage, ModelParams, Real};
use crate::seed::{self, purpose};

/// Task-agnostic training of one model on every per-device sequence pooled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JointConfig {
    pub optimizer: OptimizerConfig,
    /// Device sequences per step, drawn uniformly without replacement.
    pub batch_size: usize,
    pub steps: usize,
    pub trunc_len: usize,
    /// State reset interval; 0 trains on whole sequences.
    pub chunk_len: usize,
    pub w: f64,
    pub seed: u64,
}

impl Default for JointConfig {
    fn default() -> Self {
        JointConfig {
            optimizer: OptimizerConfig::adam(1e-3),
            batch_size: 8,
            steps: 1000,
            trunc_len: 128,
            chunk_len: 0,
            w: 9.0,
            seed: 0,
        }
    }
}

impl JointConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == 0 || self.trunc_len == 0 {
            return Err(Error::config("joint.batch_size and joint.trunc_len must be >= 1"));
        }
        if !(self.w > 0.0) {
            return Err(Error::config("joint.w must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct TrainerState {
    iteration: u64,
}

pub struct JointTrainer<'a, F> {
    cfg: JointConfig,
    ds: &'a MetaDataset,
    pairs: Vec<(usize, usize)>,
    theta: ModelParams<F>,
    opt: OptimizerState<F>,
    state: TrainerState,
    started: Instant,
}

impl<'a, F: Real> JointTrainer<'a, F> {
    pub fn new(ds: &'a MetaDataset, cfg: JointConfig, theta: ModelParams<F>) -> Result<Self> {
        cfg.validate()?;
        if ds.tasks.is_empty() {
            return Err(Error::config("joint training needs at least one task"));
        }
        if theta.dims().input_dim != 2 * ds.devices() {
            return Err(Error::Dimension {
                what: "model input_dim vs 2 × devices",
                expected: 2 * ds.devices(),
                actual: theta.dims().input_dim,
            });
        }
        Ok(JointTrainer {
            opt: OptimizerState::new(cfg.optimizer, theta.len()),
            cfg,
            ds,
            pairs: ds.device_index(),
            theta,
            state: TrainerState::default(),
            started: Instant::now(),
        })
    }

    pub fn resume(ds: &'a MetaDataset, cfg: JointConfig, ck: Checkpoint<F>) -> Result<Self> {
        let len = ck.params.len();
        let mut t = JointTrainer::new(ds, cfg, ck.params)?;
        t.opt = OptimizerState::from_parts(&ck.optimizer, &ck.moments, len)?;
        t.state = serde_json::from_value(ck.trainer_state)?;
        Ok(t)
    }

    pub fn params(&self) -> &ModelParams<F> {
        &self.theta
    }

    pub fn into_params(self) -> ModelParams<F> {
        self.theta
    }

    pub fn iteration(&self) -> u64 {
        self.state.iteration
    }

    pub fn batch(&self, iteration: u64) -> Vec<(usize, usize)> {
        let mut rng = seed::rng_for(self.cfg.seed, purpose::JOINT_BATCH, iteration);
        let amount = self.cfg.batch_size.min(self.pairs.len());
        index::sample(&mut rng, self.pairs.len(), amount)
            .into_iter()
            .map(|i| self.pairs[i])
            .collect()
    }

    /// One optimizer step; returns the mean batch loss before the update.
    pub fn step(&mut self) -> Result<f64> {
        let iteration = self.state.iteration;
        let batch = self.batch(iteration);
        let theta = &self.theta;
        let cfg = &self.cfg;
        let tasks = &self.ds.tasks;
        let chunk = (cfg.chunk_len > 0).then_some(cfg.chunk_len);
        let outputs = batch
            .par_iter()
            .map(|&(n, k)| {
                let seq = tasks[n].device_sequence(k);
                chunked_gradients(theta, (&seq).into(), F::of(cfg.w), cfg.trunc_len, chunk)
            })
            .collect::<Result<Vec<_>>>()?;
        let loss = outputs.iter().map(|o| o.mean_loss).sum::<f64>() / outputs.len() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                step: iteration,
                what: "training loss".into(),
            });
        }
        let grads = ordered_mean(outputs.into_iter().map(|o| o.grads).collect());
        self.opt.update(&mut self.theta, &grads).map_err(|e| match e {
            Error::NonFinite { what, .. } => Error::NonFinite { step: iteration, what },
            other => other,
        })?;
        self.state.iteration += 1;
        Ok(loss)
    }

    pub fn run(&mut self, mut on_step: impl FnMut(u64, f64)) -> Result<Vec<CurveRow>> {
        let mut rows = Vec::new();
        while self.state.iteration < self.cfg.steps as u64 {
            let iteration = self.state.iteration;
            let loss = self.step()?;
            on_step(iteration, loss);
            rows.push(CurveRow {
                iteration,
                train_loss: loss,
                test_loss: None,
                wall_clock_s: self.started.elapsed().as_secs_f64(),
            });
        }
        Ok(rows)
    }

    pub fn checkpoint(&self, lineage: Lineage, config: Value) -> Checkpoint<F> {
        let (optimizer, moments) = self.opt.to_parts();
        Checkpoint {
            params: self.theta.clone(),
            step: self.state.iteration,
            lineage,
            config,
            optimizer,
            trainer_state: serde_json::to_value(&self.state).expect("plain struct serializes"),
            moments,
        }
    }
}
