//! Checkpoint container.
//!
//! Header fields: `format`, `version`, `dims`, `width` (`f32`/`f64`),
//! `parameters` (flat length), `step`, `lineage` (seeds the parameters
//! descend from), `config` (resolved run configuration), `optimizer`
//! (hyper-parameters and step counter, or null), `trainer_state` (resumable
//! trainer bookkeeping such as recent losses, or null), `moment_vectors`,
//! `payload_bytes`, `sha256`.
//!
//! Payload: the flat parameter vector in [`Segment`](super::Segment) order,
//! then `moment_vectors` optimizer vectors of the same length, all
//! little-endian at the declared width.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::params::{ModelDims, ModelParams, Real, Width};
use crate::container::{self, PayloadReader};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"BLKPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Where a parameter vector came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub master_seed: u64,
    pub init_seed: u64,
    /// Producer, e.g. `maml`, `joint`, `adapt`, `random`.
    pub trainer: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<F> {
    pub params: ModelParams<F>,
    pub step: u64,
    pub lineage: Lineage,
    pub config: Value,
    pub optimizer: Value,
    pub trainer_state: Value,
    /// Optimizer vectors (Adam first and second moments), each the length of
    /// the parameter vector.
    pub moments: Vec<Vec<F>>,
}

impl<F: Real> Checkpoint<F> {
    pub fn new(params: ModelParams<F>, lineage: Lineage) -> Self {
        Checkpoint {
            params,
            step: 0,
            lineage,
            config: Value::Null,
            optimizer: Value::Null,
            trainer_state: Value::Null,
            moments: Vec::new(),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut header = Map::new();
        header.insert("format".into(), Value::from("blockpred-checkpoint"));
        header.insert("dims".into(), serde_json::to_value(self.params.dims())?);
        header.insert("width".into(), serde_json::to_value(F::WIDTH)?);
        header.insert("parameters".into(), Value::from(self.params.len()));
        header.insert("step".into(), Value::from(self.step));
        header.insert("lineage".into(), serde_json::to_value(&self.lineage)?);
        header.insert("config".into(), self.config.clone());
        header.insert("optimizer".into(), self.optimizer.clone());
        header.insert("trainer_state".into(), self.trainer_state.clone());
        header.insert("moment_vectors".into(), Value::from(self.moments.len()));
        let mut payload = Vec::new();
        let n = self.params.len();
        let mut push = |xs: &[F]| -> Result<()> {
            if xs.len() != n {
                return Err(Error::Dimension {
                    what: "optimizer moment vector",
                    expected: n,
                    actual: xs.len(),
                });
            }
            match F::WIDTH {
                Width::F32 => container::push_f32s(&mut payload, &xs.iter().map(|x| x.as_f64() as f32).collect::<Vec<_>>()),
                Width::F64 => container::push_f64s(&mut payload, &xs.iter().map(|x| x.as_f64()).collect::<Vec<_>>()),
            }
            Ok(())
        };
        push(self.params.as_slice())?;
        for m in &self.moments {
            push(m)?;
        }
        container::encode(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, header, &payload)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = container::decode(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, bytes)?;
        let get = |name: &str| {
            header
                .get(name)
                .cloned()
                .ok_or_else(|| Error::Format(format!("checkpoint header is missing `{name}`")))
        };
        let dims: ModelDims = serde_json::from_value(get("dims")?)?;
        let width: Width = serde_json::from_value(get("width")?)?;
        if width != F::WIDTH {
            return Err(Error::Format(format!(
                "checkpoint stores {width:?} parameters, caller expects {:?}",
                F::WIDTH
            )));
        }
        let n: usize = serde_json::from_value(get("parameters")?)?;
        let moment_vectors: usize = serde_json::from_value(get("moment_vectors")?)?;
        let mut reader = PayloadReader::new(payload);
        let mut read = || -> Result<Vec<F>> {
            Ok(match width {
                Width::F32 => reader.f32s(n)?.into_iter().map(F::of_f32).collect(),
                Width::F64 => reader.f64s(n)?.into_iter().map(F::of).collect(),
            })
        };
        let params = ModelParams::unflatten(read()?, dims)?;
        let moments = (0..moment_vectors).map(|_| read()).collect::<Result<Vec<_>>>()?;
        reader.finish()?;
        Ok(Checkpoint {
            params,
            step: serde_json::from_value(get("step")?)?,
            lineage: serde_json::from_value(get("lineage")?)?,
            config: get("config")?,
            optimizer: get("optimizer")?,
            trainer_state: get("trainer_state")?,
            moments,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_atomic(path, &self.encode()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}
