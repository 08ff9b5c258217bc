use std::time::Instant;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::curve::CurveRow;
use super::optimizer::{OptimizerConfig, OptimizerKind, OptimizerState};
use super::ordered_mean;
use crate::dataset::{split_sequence, MetaDataset, TaskDataset};
use crate::error::{Error, Result};
use crate::nn::{chunked_gradients, Checkpoint, Gradients, Lineage, ModelParams, Real, SequenceRef};
use crate::seed::{self, purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaConfig {
    /// Inner (adaptation) step size.
    pub alpha: f64,
    /// Outer step size.
    pub beta: f64,
    pub meta_batch: usize,
    pub inner_steps: usize,
    /// State is reset every `chunk_len` slots during meta-training; 0 disables.
    pub chunk_len: usize,
    pub trunc_len: usize,
    /// Weight of positive labels in the loss.
    pub w: f64,
    pub first_order: bool,
    pub max_meta_iters: usize,
    /// Early stop once the mean meta-test loss over the last
    /// `convergence_window` iterations improves on the window before it by
    /// less than `convergence_tol`.
    pub early_stop: bool,
    pub convergence_window: usize,
    pub convergence_tol: f64,
    pub outer_optimizer: OptimizerKind,
    /// Fraction of each sequence used as the inner (meta-train) half.
    pub split_fraction: f64,
    /// Norm of the finite-difference perturbation used for Hessian-vector
    /// products when `first_order` is off.
    pub hvp_epsilon: f64,
    pub seed: u64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            alpha: 0.1,
            beta: 1e-3,
            meta_batch: 8,
            inner_steps: 1,
            chunk_len: 512,
            trunc_len: 128,
            w: 9.0,
            first_order: true,
            max_meta_iters: 1000,
            early_stop: true,
            convergence_window: 50,
            convergence_tol: 1e-4,
            outer_optimizer: OptimizerKind::Adam,
            split_fraction: 0.5,
            hvp_epsilon: 1e-4,
            seed: 0,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("meta.alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!("meta.beta must be > 0, got {}", self.beta)));
        }
        if self.meta_batch == 0 || self.inner_steps == 0 || self.trunc_len == 0 {
            return Err(Error::config("meta.meta_batch, meta.inner_steps and meta.trunc_len must be >= 1"));
        }
        if !(self.w > 0.0) {
            return Err(Error::config("meta.w must be > 0"));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::config("meta.split_fraction must lie in (0, 1)"));
        }
        if self.early_stop && self.convergence_window == 0 {
            return Err(Error::config("meta.convergence_window must be >= 1 when early_stop is on"));
        }
        if !self.first_order && !(self.hvp_epsilon > 0.0) {
            return Err(Error::config("meta.hvp_epsilon must be > 0"));
        }
        Ok(())
    }

    pub fn outer_optimizer_config(&self) -> OptimizerConfig {
        match self.outer_optimizer {
            OptimizerKind::Sgd => OptimizerConfig::sgd(self.beta),
            OptimizerKind::Adam => OptimizerConfig::adam(self.beta),
        }
    }

    fn chunk(&self) -> Option<usize> {
        (self.chunk_len > 0).then_some(self.chunk_len)
    }
}

/// Result of the inner adaptation and outer gradient for one batch member.
#[derive(Debug, Clone)]
pub struct MemberOutput<F> {
    /// Loss of the inner half at the initial parameters.
    pub train_loss: f64,
    /// Loss of the outer half at the adapted parameters.
    pub test_loss: f64,
    pub grads: Gradients<F>,
}

/// Inner SGD steps on `train`, then the gradient of the `test` loss at the
/// adapted parameters. With `first_order` off the gradient is carried back
/// through each inner step with finite-difference Hessian-vector products.
pub fn member_gradient<F: Real>(
    theta: &ModelParams<F>,
    train: SequenceRef<'_>,
    test: SequenceRef<'_>,
    cfg: &MetaConfig,
) -> Result<MemberOutput<F>> {
    let w = F::of(cfg.w);
    let alpha = F::of(cfg.alpha);
    let mut phi = theta.clone();
    let mut inner_points = Vec::new();
    let mut train_loss = f64::NAN;
    for s in 0..cfg.inner_steps {
        let out = chunked_gradients(&phi, train, w, cfg.trunc_len, cfg.chunk())?;
        if s == 0 {
            train_loss = out.mean_loss;
        }
        if !cfg.first_order {
            inner_points.push(phi.clone());
        }
        phi.add_scaled(&out.grads, -alpha);
    }
    let outer = chunked_gradients(&phi, test, w, cfg.trunc_len, cfg.chunk())?;
    let mut grads = outer.grads;
    for point in inner_points.iter().rev() {
        let hv = hessian_vector(point, train, &grads, cfg)?;
        grads.add_scaled(&hv, -alpha);
    }
    Ok(MemberOutput {
        train_loss,
        test_loss: outer.mean_loss,
        grads,
    })
}

fn hessian_vector<F: Real>(
    at: &ModelParams<F>,
    train: SequenceRef<'_>,
    v: &Gradients<F>,
    cfg: &MetaConfig,
) -> Result<Gradients<F>> {
    let norm = v.norm();
    if norm == 0.0 {
        return Ok(Gradients::zeros(*at.dims()));
    }
    let eps = cfg.hvp_epsilon / norm;
    let w = F::of(cfg.w);
    let mut plus = at.clone();
    plus.add_scaled(v, F::of(eps));
    let mut minus = at.clone();
    minus.add_scaled(v, F::of(-eps));
    let mut hv = chunked_gradients(&plus, train, w, cfg.trunc_len, cfg.chunk())?.grads;
    let gm = chunked_gradients(&minus, train, w, cfg.trunc_len, cfg.chunk())?.grads;
    hv.add_scaled(&gm, -F::one());
    hv.scale(F::of(0.5 / eps));
    Ok(hv)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct TrainerState {
    iteration: u64,
    recent_test_losses: Vec<f64>,
}

/// Meta-trains an initialization over the per-device sequences of a
/// meta-dataset. Every sequence is split once into a contiguous inner
/// (meta-train) prefix and outer (meta-test) suffix.
pub struct MamlTrainer<F> {
    cfg: MetaConfig,
    parts: Vec<(TaskDataset, TaskDataset)>,
    pairs: Vec<(usize, usize)>,
    theta: ModelParams<F>,
    opt: OptimizerState<F>,
    state: TrainerState,
    started: Instant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub iteration: u64,
    pub meta_train_loss: f64,
    pub meta_test_loss: f64,
}

impl<F: Real> MamlTrainer<F> {
    pub fn new(ds: &MetaDataset, cfg: MetaConfig, theta: ModelParams<F>) -> Result<Self> {
        cfg.validate()?;
        if ds.tasks.is_empty() {
            return Err(Error::config("meta-training needs at least one task"));
        }
        if theta.dims().input_dim != 2 * ds.devices() {
            return Err(Error::Dimension {
                what: "model input_dim vs 2 × devices",
                expected: 2 * ds.devices(),
                actual: theta.dims().input_dim,
            });
        }
        let parts = ds
            .tasks
            .iter()
            .map(|t| split_sequence(t, cfg.split_fraction))
            .collect::<Result<Vec<_>>>()?;
        let opt = OptimizerState::new(cfg.outer_optimizer_config(), theta.len());
        Ok(MamlTrainer {
            cfg,
            parts,
            pairs: ds.device_index(),
            theta,
            opt,
            state: TrainerState::default(),
            started: Instant::now(),
        })
    }

    /// Continues from a checkpoint written by [`MamlTrainer::checkpoint`].
    pub fn resume(ds: &MetaDataset, cfg: MetaConfig, ck: Checkpoint<F>) -> Result<Self> {
        let len = ck.params.len();
        let mut t = MamlTrainer::new(ds, cfg, ck.params)?;
        t.opt = OptimizerState::from_parts(&ck.optimizer, &ck.moments, len)?;
        t.state = serde_json::from_value(ck.trainer_state)?;
        Ok(t)
    }

    pub fn config(&self) -> &MetaConfig {
        &self.cfg
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

    /// Inner and outer halves of task `n`.
    pub fn halves(&self, n: usize) -> (&TaskDataset, &TaskDataset) {
        let (a, b) = &self.parts[n];
        (a, b)
    }

    /// `(task, device)` pairs of the meta-batch drawn at `iteration`. Depends
    /// only on the seed and the iteration number.
    pub fn batch(&self, iteration: u64) -> Vec<(usize, usize)> {
        let mut rng = seed::rng_for(self.cfg.seed, purpose::MAML_BATCH, iteration);
        let amount = self.cfg.meta_batch.min(self.pairs.len());
        index::sample(&mut rng, self.pairs.len(), amount)
            .into_iter()
            .map(|i| self.pairs[i])
            .collect()
    }

    pub fn step(&mut self) -> Result<IterationStats> {
        let iteration = self.state.iteration;
        let batch = self.batch(iteration);
        let theta = &self.theta;
        let cfg = &self.cfg;
        let parts = &self.parts;
        let outputs = batch
            .par_iter()
            .map(|&(n, k)| {
                let train = parts[n].0.device_sequence(k);
                let test = parts[n].1.device_sequence(k);
                member_gradient(theta, (&train).into(), (&test).into(), cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        let b = outputs.len() as f64;
        let meta_train_loss = outputs.iter().map(|o| o.train_loss).sum::<f64>() / b;
        let meta_test_loss = outputs.iter().map(|o| o.test_loss).sum::<f64>() / b;
        if !meta_test_loss.is_finite() || !meta_train_loss.is_finite() {
            return Err(Error::NonFinite {
                step: iteration,
                what: "meta loss".into(),
            });
        }
        let grads = ordered_mean(outputs.into_iter().map(|o| o.grads).collect());
        self.opt.update(&mut self.theta, &grads).map_err(|e| match e {
            Error::NonFinite { what, .. } => Error::NonFinite { step: iteration, what },
            other => other,
        })?;
        self.state.iteration += 1;
        let keep = 2 * self.cfg.convergence_window.max(1);
        self.state.recent_test_losses.push(meta_test_loss);
        if self.state.recent_test_losses.len() > keep {
            self.state.recent_test_losses.remove(0);
        }
        Ok(IterationStats {
            iteration,
            meta_train_loss,
            meta_test_loss,
        })
    }

    pub fn converged(&self) -> bool {
        if !self.cfg.early_stop {
            return false;
        }
        let w = self.cfg.convergence_window;
        let h = &self.state.recent_test_losses;
        if h.len() < 2 * w {
            return false;
        }
        let prev = h[h.len() - 2 * w..h.len() - w].iter().sum::<f64>() / w as f64;
        let cur = h[h.len() - w..].iter().sum::<f64>() / w as f64;
        prev - cur < self.cfg.convergence_tol
    }

    pub fn finished(&self) -> bool {
        self.state.iteration >= self.cfg.max_meta_iters as u64 || self.converged()
    }

    /// Steps until `max_meta_iters` or convergence, calling `on_step` after
    /// every iteration.
    pub fn run(&mut self, mut on_step: impl FnMut(&IterationStats)) -> Result<Vec<CurveRow>> {
        let mut rows = Vec::new();
        while !self.finished() {
            let stats = self.step()?;
            on_step(&stats);
            rows.push(CurveRow {
                iteration: stats.iteration,
                train_loss: stats.meta_train_loss,
                test_loss: Some(stats.meta_test_loss),
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
