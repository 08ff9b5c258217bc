//! Independent f64 reference network and random sequences shared by the
//! integration tests.
#![allow(dead_code)]

use blockpred::nn::{Layout, ModelDims, ModelParams, Segment, SequenceRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Reference {
    pub dims: ModelDims,
    pub w: Vec<f64>,
}

pub fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Reference {
    pub fn new(p: &ModelParams<f64>) -> Self {
        Reference { dims: *p.dims(), w: p.flatten() }
    }

    pub fn seg(&self, s: Segment) -> &[f64] {
        &self.w[Layout::new(&self.dims).range(s)]
    }

    /// Returns (prob, h, c).
    pub fn step(&self, x: &[f64], h: &[f64], c: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let (p, h2, c2, _) = self.step_with_margin(x, h, c);
        (p, h2, c2)
    }

    /// Like [`Reference::step`], also returning the smallest distance of any
    /// ReLU pre-activation from zero.
    pub fn step_with_margin(&self, x: &[f64], h: &[f64], c: &[f64]) -> (f64, Vec<f64>, Vec<f64>, f64) {
        let mut margin = f64::INFINITY;
        let mut relu = |v: f64| {
            margin = margin.min(v.abs());
            v.max(0.0)
        };
        let d = self.dims;
        let units = d.lstm_units;
        let (wi, bi) = (self.seg(Segment::InputWeight), self.seg(Segment::InputBias));
        let a1: Vec<f64> = (0..d.hidden_in)
            .map(|r| relu(bi[r] + (0..d.input_dim).map(|k| wi[r * d.input_dim + k] * x[k]).sum::<f64>()))
            .collect();
        let (wx, wh, b) = (
            self.seg(Segment::LstmInputWeight),
            self.seg(Segment::LstmRecurrentWeight),
            self.seg(Segment::LstmBias),
        );
        let pre = |r: usize| {
            b[r] + (0..d.hidden_in).map(|k| wx[r * d.hidden_in + k] * a1[k]).sum::<f64>()
                + (0..units).map(|k| wh[r * units + k] * h[k]).sum::<f64>()
        };
        let mut h2 = vec![0.0; units];
        let mut c2 = vec![0.0; units];
        for j in 0..units {
            let i = sig(pre(j));
            let f = sig(pre(units + j));
            let g = pre(2 * units + j).tanh();
            let o = sig(pre(3 * units + j));
            c2[j] = f * c[j] + i * g;
            h2[j] = o * c2[j].tanh();
        }
        let (wo, bo) = (self.seg(Segment::OutputWeight), self.seg(Segment::OutputBias));
        let a2: Vec<f64> = (0..d.hidden_out)
            .map(|r| relu(bo[r] + (0..units).map(|k| wo[r * units + k] * h2[k]).sum::<f64>()))
            .collect();
        let head = self.seg(Segment::HeadWeight);
        let logit = self.seg(Segment::HeadBias)[0] + (0..d.hidden_out).map(|k| head[k] * a2[k]).sum::<f64>();
        (sig(logit), h2, c2, margin)
    }

    pub fn bce(z: u8, x: f64, w: f64) -> f64 {
        let x = x.clamp(1e-7, 1.0 - 1e-7);
        if z == 1 {
            -w * x.ln()
        } else {
            -(1.0 - x).ln()
        }
    }

    /// Masked mean loss where the state entering each window starting at a
    /// multiple of `window` is taken from `frozen` instead of the recurrence.
    pub fn loss_with_frozen(&self, seq: &Seq, w: f64, window: usize, frozen: &[(Vec<f64>, Vec<f64>)]) -> f64 {
        let dim = self.dims.input_dim;
        let mut h = vec![0.0; self.dims.lstm_units];
        let mut c = h.clone();
        let mut sum = 0.0;
        for t in 0..seq.labels.len() {
            if t % window == 0 {
                (h, c) = frozen[t / window].clone();
            }
            let x: Vec<f64> = seq.obs[t * dim..(t + 1) * dim].iter().map(|&v| f64::from(v)).collect();
            let (p, h2, c2) = self.step(&x, &h, &c);
            if seq.mask[t] {
                sum += Self::bce(seq.labels[t], p, w);
            }
            h = h2;
            c = c2;
        }
        sum / seq.mask.iter().filter(|&&m| m).count() as f64
    }

    /// Smallest distance of any ReLU pre-activation from zero over the
    /// sequence, with window start states taken from `frozen`.
    pub fn relu_margin(&self, seq: &Seq, window: usize, frozen: &[(Vec<f64>, Vec<f64>)]) -> f64 {
        let dim = self.dims.input_dim;
        let mut h = vec![0.0; self.dims.lstm_units];
        let mut c = h.clone();
        let mut margin = f64::INFINITY;
        for t in 0..seq.labels.len() {
            if t % window == 0 {
                (h, c) = frozen[t / window].clone();
            }
            let x: Vec<f64> = seq.obs[t * dim..(t + 1) * dim].iter().map(|&v| f64::from(v)).collect();
            let (_, h2, c2, m) = self.step_with_margin(&x, &h, &c);
            margin = margin.min(m);
            h = h2;
            c = c2;
        }
        margin
    }

    /// Window start states of the untruncated recurrence.
    pub fn window_states(&self, seq: &Seq, window: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        let dim = self.dims.input_dim;
        let mut h = vec![0.0; self.dims.lstm_units];
        let mut c = h.clone();
        let mut out = Vec::new();
        for t in 0..seq.labels.len() {
            if t % window == 0 {
                out.push((h.clone(), c.clone()));
            }
            let x: Vec<f64> = seq.obs[t * dim..(t + 1) * dim].iter().map(|&v| f64::from(v)).collect();
            let (_, h2, c2) = self.step(&x, &h, &c);
            h = h2;
            c = c2;
        }
        out
    }
}

pub struct Seq {
    pub obs: Vec<f32>,
    pub labels: Vec<u8>,
    pub mask: Vec<bool>,
}

impl Seq {
    pub fn random(dim: usize, len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = (0..dim * len).map(|_| rng.random_range(-1.0f32..1.5)).collect();
        let labels = (0..len).map(|_| u8::from(rng.random_bool(0.3))).collect();
        let mask = (0..len).map(|t| t == 0 || t + 3 < len || rng.random_bool(0.5)).collect();
        Seq { obs, labels, mask }
    }

    pub fn as_ref(&self) -> SequenceRef<'_> {
        SequenceRef {
            obs: &self.obs,
            labels: &self.labels,
            mask: &self.mask,
        }
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}
