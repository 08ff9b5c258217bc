//! Forward pass and truncated backpropagation through time.
//!
//! ```text
//! a1 = relu(W_in x + b_in)
//! z  = W_ih a1 + W_hh h_prev + b          (gates i, f, g, o)
//! c  = σ(f) ⊙ c_prev + σ(i) ⊙ tanh(g)
//! h  = σ(o) ⊙ tanh(c)
//! a2 = relu(W_out h + b_out)
//! p  = σ(w_head · a2 + b_head)
//! ```

use super::loss::{weighted_bce, weighted_bce_logit_grad};
use super::params::{Gradients, ModelParams, Real, Segment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState<F> {
    pub cell: Vec<F>,
    pub hidden: Vec<F>,
}

impl<F: Real> RecurrentState<F> {
    pub fn zeros(units: usize) -> Self {
        RecurrentState {
            cell: vec![F::zero(); units],
            hidden: vec![F::zero(); units],
        }
    }

    pub fn units(&self) -> usize {
        self.cell.len()
    }
}

#[inline]
fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

#[inline]
fn dot<F: Real>(w: &[F], x: &[F]) -> F {
    let mut acc = F::zero();
    for (&a, &b) in w.iter().zip(x) {
        acc += a * b;
    }
    acc
}

/// `out = b + W v` with `W` row-major `out.len() × v.len()`.
#[inline]
fn affine<F: Real>(w: &[F], b: &[F], v: &[F], out: &mut [F]) {
    let cols = v.len();
    for ((o, row), &bias) in out.iter_mut().zip(w.chunks_exact(cols)).zip(b) {
        *o = bias + dot(row, v);
    }
}

/// `out += W v`
#[inline]
fn accumulate_matvec<F: Real>(w: &[F], v: &[F], out: &mut [F]) {
    let cols = v.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += dot(row, v);
    }
}

/// `out += Wᵀ d`
#[inline]
fn accumulate_matvec_t<F: Real>(w: &[F], d: &[F], out: &mut [F]) {
    let cols = out.len();
    for (row, &dv) in w.chunks_exact(cols).zip(d) {
        if dv == F::zero() {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += wv * dv;
        }
    }
}

/// `G += d ⊗ v`
#[inline]
fn accumulate_outer<F: Real>(g: &mut [F], d: &[F], v: &[F]) {
    let cols = v.len();
    for (row, &dv) in g.chunks_exact_mut(cols).zip(d) {
        if dv == F::zero() {
            continue;
        }
        for (gv, &x) in row.iter_mut().zip(v) {
            *gv += dv * x;
        }
    }
}

/// Activations of one step, kept for the backward pass.
#[derive(Debug, Clone)]
struct StepCache<F> {
    x: Vec<F>,
    a1: Vec<F>,
    /// Post-activation gates `[i, f, g, o]`, each `H` long.
    gates: Vec<F>,
    c_prev: Vec<F>,
    h_prev: Vec<F>,
    c: Vec<F>,
    tanh_c: Vec<F>,
    h: Vec<F>,
    a2: Vec<F>,
    prob: F,
}

impl<F: Real> StepCache<F> {
    fn new(p: &ModelParams<F>) -> Self {
        let d = p.dims();
        let h = d.lstm_units;
        StepCache {
            x: vec![F::zero(); d.input_dim],
            a1: vec![F::zero(); d.hidden_in],
            gates: vec![F::zero(); 4 * h],
            c_prev: vec![F::zero(); h],
            h_prev: vec![F::zero(); h],
            c: vec![F::zero(); h],
            tanh_c: vec![F::zero(); h],
            h: vec![F::zero(); h],
            a2: vec![F::zero(); d.hidden_out],
            prob: F::zero(),
        }
    }

    /// Runs one step from `(h_prev, c_prev)`, which must already be loaded.
    fn run(&mut self, p: &ModelParams<F>, obs: &[f32]) {
        let units = self.h.len();
        for (x, &o) in self.x.iter_mut().zip(obs) {
            *x = F::of_f32(o);
        }
        affine(p.segment(Segment::InputWeight), p.segment(Segment::InputBias), &self.x, &mut self.a1);
        for a in &mut self.a1 {
            if *a < F::zero() {
                *a = F::zero();
            }
        }
        affine(
            p.segment(Segment::LstmInputWeight),
            p.segment(Segment::LstmBias),
            &self.a1,
            &mut self.gates,
        );
        accumulate_matvec(p.segment(Segment::LstmRecurrentWeight), &self.h_prev, &mut self.gates);
        let (ifg, o) = self.gates.split_at_mut(3 * units);
        let (i, fg) = ifg.split_at_mut(units);
        let (f, g) = fg.split_at_mut(units);
        for j in 0..units {
            i[j] = sigmoid(i[j]);
            f[j] = sigmoid(f[j]);
            g[j] = g[j].tanh();
            o[j] = sigmoid(o[j]);
            self.c[j] = f[j] * self.c_prev[j] + i[j] * g[j];
            self.tanh_c[j] = self.c[j].tanh();
            self.h[j] = o[j] * self.tanh_c[j];
        }
        affine(p.segment(Segment::OutputWeight), p.segment(Segment::OutputBias), &self.h, &mut self.a2);
        for a in &mut self.a2 {
            if *a < F::zero() {
                *a = F::zero();
            }
        }
        let logit = p.segment(Segment::HeadBias)[0] + dot(p.segment(Segment::HeadWeight), &self.a2);
        self.prob = sigmoid(logit);
    }

    fn load_state(&mut self, s: &RecurrentState<F>) {
        self.h_prev.copy_from_slice(&s.hidden);
        self.c_prev.copy_from_slice(&s.cell);
    }

    /// Makes this step's output the next step's input state.
    fn advance(&mut self) {
        std::mem::swap(&mut self.h_prev, &mut self.h);
        std::mem::swap(&mut self.c_prev, &mut self.c);
    }

    fn state(&self) -> RecurrentState<F> {
        RecurrentState {
            cell: self.c.clone(),
            hidden: self.h.clone(),
        }
    }
}

fn check_input<F: Real>(p: &ModelParams<F>, obs: &[f32], state: &RecurrentState<F>) -> Result<usize> {
    let dim = p.dims().input_dim;
    if obs.len() % dim != 0 {
        return Err(Error::Dimension {
            what: "observation length (multiple of input_dim)",
            expected: dim,
            actual: obs.len() % dim,
        });
    }
    if state.units() != p.dims().lstm_units || state.hidden.len() != state.units() {
        return Err(Error::Dimension {
            what: "recurrent state units",
            expected: p.dims().lstm_units,
            actual: state.units(),
        });
    }
    Ok(obs.len() / dim)
}

/// One step of the predictor: probability of a blockage in the window and
/// the updated recurrent state.
pub fn forward_step<F: Real>(p: &ModelParams<F>, obs_row: &[f32], state: &RecurrentState<F>) -> Result<(F, RecurrentState<F>)> {
    if obs_row.len() != p.dims().input_dim {
        return Err(Error::Dimension {
            what: "observation row",
            expected: p.dims().input_dim,
            actual: obs_row.len(),
        });
    }
    check_input(p, obs_row, state)?;
    let mut cache = StepCache::new(p);
    cache.load_state(state);
    cache.run(p, obs_row);
    Ok((cache.prob, cache.state()))
}

/// Runs the predictor over `T` rows (`obs` is row-major `T × input_dim`).
pub fn forward_sequence<F: Real>(
    p: &ModelParams<F>,
    obs: &[f32],
    init: &RecurrentState<F>,
) -> Result<(Vec<F>, RecurrentState<F>)> {
    let rows = check_input(p, obs, init)?;
    let dim = p.dims().input_dim;
    let mut cache = StepCache::new(p);
    cache.load_state(init);
    let mut probs = Vec::with_capacity(rows);
    for row in obs.chunks_exact(dim) {
        cache.run(p, row);
        probs.push(cache.prob);
        cache.advance();
    }
    // After the final advance the latest state sits in the `_prev` buffers.
    let state = RecurrentState {
        cell: cache.c_prev.clone(),
        hidden: cache.h_prev.clone(),
    };
    Ok((probs, state))
}

/// Backward-pass scratch buffers.
struct Scratch<F> {
    dz: Vec<F>,
    da1: Vec<F>,
    dh: Vec<F>,
    dc: Vec<F>,
    dh_next: Vec<F>,
    dc_next: Vec<F>,
    da2: Vec<F>,
}

impl<F: Real> Scratch<F> {
    fn new(p: &ModelParams<F>) -> Self {
        let d = p.dims();
        let h = d.lstm_units;
        Scratch {
            dz: vec![F::zero(); 4 * h],
            da1: vec![F::zero(); d.hidden_in],
            dh: vec![F::zero(); h],
            dc: vec![F::zero(); h],
            dh_next: vec![F::zero(); h],
            dc_next: vec![F::zero(); h],
            da2: vec![F::zero(); d.hidden_out],
        }
    }
}

/// Backpropagates through one window of cached steps. `dlogits[t]` is the
/// loss gradient at the sigmoid input of step `t`. Gradient flowing into the
/// window's initial state is dropped.
fn backward_window<F: Real>(p: &ModelParams<F>, steps: &[StepCache<F>], dlogits: &[F], s: &mut Scratch<F>, grads: &mut Gradients<F>) {
    let d = *p.dims();
    let units = d.lstm_units;
    s.dh_next.iter_mut().for_each(|x| *x = F::zero());
    s.dc_next.iter_mut().for_each(|x| *x = F::zero());
    let head_w = p.segment(Segment::HeadWeight);
    let out_w = p.segment(Segment::OutputWeight);
    let wih = p.segment(Segment::LstmInputWeight);
    let whh = p.segment(Segment::LstmRecurrentWeight);

    for (step, &dlogit) in steps.iter().zip(dlogits).rev() {
        // Output head and hidden dense layer.
        s.dh.copy_from_slice(&s.dh_next);
        if dlogit != F::zero() {
            {
                let g = grads.segment_mut(Segment::HeadWeight);
                for (gv, &a) in g.iter_mut().zip(&step.a2) {
                    *gv += dlogit * a;
                }
            }
            grads.segment_mut(Segment::HeadBias)[0] += dlogit;
            for ((da, &w), &a) in s.da2.iter_mut().zip(head_w).zip(&step.a2) {
                *da = if a > F::zero() { dlogit * w } else { F::zero() };
            }
            accumulate_outer(grads.segment_mut(Segment::OutputWeight), &s.da2, &step.h);
            for (gb, &da) in grads.segment_mut(Segment::OutputBias).iter_mut().zip(&s.da2) {
                *gb += da;
            }
            accumulate_matvec_t(out_w, &s.da2, &mut s.dh);
        }

        // LSTM cell.
        let (gi, rest) = step.gates.split_at(units);
        let (gf, rest) = rest.split_at(units);
        let (gg, go) = rest.split_at(units);
        let (dzi, rest) = s.dz.split_at_mut(units);
        let (dzf, rest) = rest.split_at_mut(units);
        let (dzg, dzo) = rest.split_at_mut(units);
        for j in 0..units {
            let dh = s.dh[j];
            let tc = step.tanh_c[j];
            let dc = dh * go[j] * (F::one() - tc * tc) + s.dc_next[j];
            s.dc[j] = dc;
            dzo[j] = dh * tc * go[j] * (F::one() - go[j]);
            dzi[j] = dc * gg[j] * gi[j] * (F::one() - gi[j]);
            dzg[j] = dc * gi[j] * (F::one() - gg[j] * gg[j]);
            dzf[j] = dc * step.c_prev[j] * gf[j] * (F::one() - gf[j]);
            s.dc_next[j] = dc * gf[j];
        }
        accumulate_outer(grads.segment_mut(Segment::LstmInputWeight), &s.dz, &step.a1);
        accumulate_outer(grads.segment_mut(Segment::LstmRecurrentWeight), &s.dz, &step.h_prev);
        for (gb, &dz) in grads.segment_mut(Segment::LstmBias).iter_mut().zip(&s.dz) {
            *gb += dz;
        }
        s.dh_next.iter_mut().for_each(|x| *x = F::zero());
        accumulate_matvec_t(whh, &s.dz, &mut s.dh_next);

        // Input dense layer.
        s.da1.iter_mut().for_each(|x| *x = F::zero());
        accumulate_matvec_t(wih, &s.dz, &mut s.da1);
        for (da, &a) in s.da1.iter_mut().zip(&step.a1) {
            if a <= F::zero() {
                *da = F::zero();
            }
        }
        accumulate_outer(grads.segment_mut(Segment::InputWeight), &s.da1, &step.x);
        for (gb, &da) in grads.segment_mut(Segment::InputBias).iter_mut().zip(&s.da1) {
            *gb += da;
        }
    }
}

/// Labelled sequence borrowed for a gradient evaluation.
#[derive(Debug, Clone, Copy)]
pub struct SequenceRef<'a> {
    /// Row-major `T × input_dim`.
    pub obs: &'a [f32],
    pub labels: &'a [u8],
    pub mask: &'a [bool],
}

impl<'a> SequenceRef<'a> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Slots `[start, end)`.
    pub fn slice(&self, start: usize, end: usize, dim: usize) -> SequenceRef<'a> {
        SequenceRef {
            obs: &self.obs[start * dim..end * dim],
            labels: &self.labels[start..end],
            mask: &self.mask[start..end],
        }
    }
}

impl<'a> From<&'a crate::dataset::DeviceSequence> for SequenceRef<'a> {
    fn from(s: &'a crate::dataset::DeviceSequence) -> Self {
        SequenceRef {
            obs: &s.obs.data,
            labels: &s.labels,
            mask: &s.mask,
        }
    }
}

/// Reusable buffers for truncated BPTT over windows of at most `trunc_len`.
pub struct Tbptt<F> {
    steps: Vec<StepCache<F>>,
    dlogits: Vec<F>,
    scratch: Scratch<F>,
}

impl<F: Real> Tbptt<F> {
    pub fn new(p: &ModelParams<F>, trunc_len: usize) -> Self {
        Tbptt {
            steps: (0..trunc_len.max(1)).map(|_| StepCache::new(p)).collect(),
            dlogits: vec![F::zero(); trunc_len.max(1)],
            scratch: Scratch::new(p),
        }
    }

    pub fn trunc_len(&self) -> usize {
        self.steps.len()
    }

    /// Adds `scale · ∇(Σ_valid ℓ_t)` over `seq` into `grads`, starting from
    /// `state` and cutting the gradient every `trunc_len` slots. Returns the
    /// unscaled loss sum and the final state.
    pub fn accumulate(
        &mut self,
        p: &ModelParams<F>,
        seq: SequenceRef<'_>,
        weight: F,
        scale: F,
        state: &RecurrentState<F>,
        grads: &mut Gradients<F>,
    ) -> Result<(f64, RecurrentState<F>)> {
        let rows = check_input(p, seq.obs, state)?;
        if rows != seq.labels.len() || rows != seq.mask.len() {
            return Err(Error::Dimension {
                what: "labels/mask vs observation rows",
                expected: rows,
                actual: seq.labels.len().min(seq.mask.len()),
            });
        }
        let dim = p.dims().input_dim;
        let window = self.trunc_len();
        let mut loss_sum = 0.0;
        let mut h = state.hidden.clone();
        let mut c = state.cell.clone();
        let mut start = 0;
        while start < rows {
            let end = (start + window).min(rows);
            let n = end - start;
            for (i, t) in (start..end).enumerate() {
                let (before, after) = self.steps.split_at_mut(i);
                let step = &mut after[0];
                match before.last() {
                    Some(prev) => {
                        step.h_prev.copy_from_slice(&prev.h);
                        step.c_prev.copy_from_slice(&prev.c);
                    }
                    None => {
                        step.h_prev.copy_from_slice(&h);
                        step.c_prev.copy_from_slice(&c);
                    }
                }
                step.run(p, &seq.obs[t * dim..(t + 1) * dim]);
                self.dlogits[i] = if seq.mask[t] {
                    let z = seq.labels[t] == 1;
                    loss_sum += weighted_bce(z, step.prob, weight).as_f64();
                    scale * weighted_bce_logit_grad(z, step.prob, weight)
                } else {
                    F::zero()
                };
            }
            h.copy_from_slice(&self.steps[n - 1].h);
            c.copy_from_slice(&self.steps[n - 1].c);
            if self.dlogits[..n].iter().any(|&d| d != F::zero()) {
                backward_window(p, &self.steps[..n], &self.dlogits[..n], &mut self.scratch, grads);
            }
            start = end;
        }
        Ok((loss_sum, RecurrentState { cell: c, hidden: h }))
    }
}

#[derive(Debug, Clone)]
pub struct TbpttOutput<F> {
    /// Mean weighted BCE over valid slots.
    pub mean_loss: f64,
    pub valid: usize,
    pub grads: Gradients<F>,
    pub final_state: RecurrentState<F>,
}

/// Gradient of the masked mean weighted BCE of `seq`, truncated every
/// `trunc_len` slots, starting from the zero state.
pub fn tbptt_gradients<F: Real>(p: &ModelParams<F>, seq: SequenceRef<'_>, weight: F, trunc_len: usize) -> Result<TbpttOutput<F>> {
    chunked_gradients(p, seq, weight, trunc_len, None)
}

/// Like [`tbptt_gradients`], but the recurrent state is reset to zero every
/// `chunk_len` slots when given. The mean still runs over all valid slots.
pub fn chunked_gradients<F: Real>(
    p: &ModelParams<F>,
    seq: SequenceRef<'_>,
    weight: F,
    trunc_len: usize,
    chunk_len: Option<usize>,
) -> Result<TbpttOutput<F>> {
    if trunc_len == 0 {
        return Err(Error::config("trunc_len must be at least 1"));
    }
    let valid = seq.valid_count();
    if valid == 0 {
        return Err(Error::EmptyTargets);
    }
    let scale = F::one() / F::of(valid as f64);
    let dim = p.dims().input_dim;
    let mut grads = Gradients::zeros(*p.dims());
    let mut engine = Tbptt::new(p, trunc_len.min(seq.len().max(1)));
    let zero = RecurrentState::zeros(p.dims().lstm_units);
    let chunk = chunk_len.unwrap_or(seq.len()).max(1);
    let mut loss_sum = 0.0;
    let mut state = zero.clone();
    let mut start = 0;
    while start < seq.len() {
        let end = (start + chunk).min(seq.len());
        let (l, s) = engine.accumulate(p, seq.slice(start, end, dim), weight, scale, &zero, &mut grads)?;
        loss_sum += l;
        state = s;
        start = end;
    }
    Ok(TbpttOutput {
        mean_loss: loss_sum / valid as f64,
        valid,
        grads,
        final_state: state,
    })
}

/// Masked mean loss without gradients, same chunking rules as
/// [`chunked_gradients`].
pub fn sequence_loss<F: Real>(p: &ModelParams<F>, seq: SequenceRef<'_>, weight: F, chunk_len: Option<usize>) -> Result<f64> {
    let valid = seq.valid_count();
    if valid == 0 {
        return Err(Error::EmptyTargets);
    }
    let dim = p.dims().input_dim;
    let chunk = chunk_len.unwrap_or(seq.len()).max(1);
    let zero = RecurrentState::zeros(p.dims().lstm_units);
    let mut sum = 0.0;
    let mut start = 0;
    while start < seq.len() {
        let end = (start + chunk).min(seq.len());
        let part = seq.slice(start, end, dim);
        let (probs, _) = forward_sequence(p, part.obs, &zero)?;
        for ((&x, &z), &m) in probs.iter().zip(part.labels).zip(part.mask) {
            if m {
                sum += weighted_bce(z == 1, x, weight).as_f64();
            }
        }
        start = end;
    }
    Ok(sum / valid as f64)
}
