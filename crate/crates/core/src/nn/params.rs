use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, Range, SubAssign};

use num_traits::{Float, FromPrimitive};
use rand::distr::Uniform;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Floating-point width the network runs at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Width {
    F32,
    F64,
}

pub trait Real:
    Float + FromPrimitive + Debug + Default + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    const WIDTH: Width;

    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite constant")
    }

    fn of_f32(x: f32) -> Self;

    fn as_f64(self) -> f64;
}

impl Real for f32 {
    const WIDTH: Width = Width::F32;

    fn of_f32(x: f32) -> Self {
        x
    }

    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    const WIDTH: Width = Width::F64;

    fn of_f32(x: f32) -> Self {
        f64::from(x)
    }

    fn as_f64(self) -> f64 {
        self
    }
}

/// Layer sizes of the dense → LSTM → dense → sigmoid predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub input_dim: usize,
    pub hidden_in: usize,
    pub lstm_units: usize,
    pub hidden_out: usize,
}

impl ModelDims {
    pub fn for_devices(devices: usize) -> Self {
        ModelDims {
            input_dim: 2 * devices,
            hidden_in: 128,
            lstm_units: 128,
            hidden_out: 128,
        }
    }

    pub fn uniform(input_dim: usize, width: usize) -> Self {
        ModelDims {
            input_dim,
            hidden_in: width,
            lstm_units: width,
            hidden_out: width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_in == 0 || self.lstm_units == 0 || self.hidden_out == 0 {
            return Err(Error::config(format!("all model dimensions must be >= 1: {self:?}")));
        }
        Ok(())
    }
}

/// Named parameter blocks, in flat-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    /// `hidden_in × input_dim`
    InputWeight,
    InputBias,
    /// `4H × hidden_in`, gate blocks in order input, forget, candidate, output.
    LstmInputWeight,
    /// `4H × H`
    LstmRecurrentWeight,
    /// `4H`
    LstmBias,
    /// `hidden_out × H`
    OutputWeight,
    OutputBias,
    /// `hidden_out`
    HeadWeight,
    /// scalar
    HeadBias,
}

impl Segment {
    pub const ALL: [Segment; 9] = [
        Segment::InputWeight,
        Segment::InputBias,
        Segment::LstmInputWeight,
        Segment::LstmRecurrentWeight,
        Segment::LstmBias,
        Segment::OutputWeight,
        Segment::OutputBias,
        Segment::HeadWeight,
        Segment::HeadBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Segment::InputWeight => "input.weight",
            Segment::InputBias => "input.bias",
            Segment::LstmInputWeight => "lstm.weight_ih",
            Segment::LstmRecurrentWeight => "lstm.weight_hh",
            Segment::LstmBias => "lstm.bias",
            Segment::OutputWeight => "output.weight",
            Segment::OutputBias => "output.bias",
            Segment::HeadWeight => "head.weight",
            Segment::HeadBias => "head.bias",
        }
    }

    pub fn from_name(name: &str) -> Option<Segment> {
        Segment::ALL.into_iter().find(|s| s.name() == name)
    }

    fn len(self, d: &ModelDims) -> usize {
        let gates = 4 * d.lstm_units;
        match self {
            Segment::InputWeight => d.hidden_in * d.input_dim,
            Segment::InputBias => d.hidden_in,
            Segment::LstmInputWeight => gates * d.hidden_in,
            Segment::LstmRecurrentWeight => gates * d.lstm_units,
            Segment::LstmBias => gates,
            Segment::OutputWeight => d.hidden_out * d.lstm_units,
            Segment::OutputBias => d.hidden_out,
            Segment::HeadWeight => d.hidden_out,
            Segment::HeadBias => 1,
        }
    }

    /// Fan-in of the layer the block belongs to; 0 for biases.
    fn fan_in(self, d: &ModelDims) -> usize {
        match self {
            Segment::InputWeight => d.input_dim,
            Segment::LstmInputWeight => d.hidden_in,
            Segment::LstmRecurrentWeight | Segment::OutputWeight => d.lstm_units,
            Segment::HeadWeight => d.hidden_out,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    ranges: [Range<usize>; 9],
}

impl Layout {
    pub fn new(dims: &ModelDims) -> Self {
        let mut start = 0;
        let ranges = Segment::ALL.map(|s| {
            let r = start..start + s.len(dims);
            start = r.end;
            r
        });
        Layout { ranges }
    }

    pub fn range(&self, s: Segment) -> Range<usize> {
        self.ranges[s as usize].clone()
    }

    pub fn total(&self) -> usize {
        self.ranges[8].end
    }
}

/// All weights of the predictor, stored as one flat vector in [`Segment`]
/// order and addressable per block.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    dims: ModelDims,
    layout: Layout,
    data: Vec<F>,
}

/// Gradients share the parameter layout.
pub type Gradients<F> = ModelParams<F>;

impl<F: Real> ModelParams<F> {
    pub fn zeros(dims: ModelDims) -> Self {
        let layout = Layout::new(&dims);
        ModelParams {
            data: vec![F::zero(); layout.total()],
            dims,
            layout,
        }
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn flatten(&self) -> Vec<F> {
        self.data.clone()
    }

    pub fn unflatten(flat: Vec<F>, dims: ModelDims) -> Result<Self> {
        let layout = Layout::new(&dims);
        if flat.len() != layout.total() {
            return Err(Error::Dimension {
                what: "flat parameter vector",
                expected: layout.total(),
                actual: flat.len(),
            });
        }
        Ok(ModelParams { dims, layout, data: flat })
    }

    pub fn segment(&self, s: Segment) -> &[F] {
        &self.data[self.layout.range(s)]
    }

    pub fn segment_mut(&mut self, s: Segment) -> &mut [F] {
        let r = self.layout.range(s);
        &mut self.data[r]
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, &[F])> {
        Segment::ALL.into_iter().map(move |s| (s.name(), self.segment(s)))
    }

    pub fn get(&self, name: &str) -> Option<&[F]> {
        Segment::from_name(name).map(|s| self.segment(s))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = F::zero());
    }

    pub fn cast<G: Real>(&self) -> ModelParams<G> {
        ModelParams {
            dims: self.dims,
            layout: self.layout.clone(),
            data: self.data.iter().map(|x| G::of(x.as_f64())).collect(),
        }
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &ModelParams<F>, scale: F) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn add_assign(&mut self, other: &ModelParams<F>) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: F) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt()
    }
}

/// Fan-in scaled uniform weights `U(-1/√fan_in, 1/√fan_in)`, zero biases and
/// forget-gate biases of 1. Values are drawn in f64 so both widths start from
/// the same point.
pub fn init_params<F: Real>(dims: ModelDims, seed: u64) -> Result<ModelParams<F>> {
    dims.validate()?;
    let mut params = ModelParams::<F>::zeros(dims);
    let mut rng = seed::rng_for(seed, seed::purpose::INIT, 0);
    for s in Segment::ALL {
        let fan_in = s.fan_in(&dims);
        if fan_in == 0 {
            continue;
        }
        let bound = 1.0 / (fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("positive bound");
        for w in params.segment_mut(s) {
            *w = F::of(rng.sample(dist));
        }
    }
    let h = dims.lstm_units;
    for b in &mut params.segment_mut(Segment::LstmBias)[h..2 * h] {
        *b = F::one();
    }
    Ok(params)
}
