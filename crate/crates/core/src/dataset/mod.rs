//! Observation/label sequences built from channel traces, grouped per task.

mod io;
pub mod labels;
pub mod observations;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{decode_dataset, encode_dataset, export_trace_csv, load_dataset, save_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use labels::{is_blocked, make_labels, threshold_linear, LabelMode, LabelSequence, LabelSpec, INVALID_LABEL};
pub use observations::{make_observations, AffineNorm, ObservationSequence};

use crate::error::{Error, Result};
use crate::geometry::ArcTable;
use crate::scenario::{sample_scenario, simulate_traces, ChannelTrace, ScenarioDistribution, ScenarioParams};
use crate::seed::{derive_seed, purpose};

/// Everything needed to regenerate a [`MetaDataset`] bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub scenario: ScenarioDistribution,
    pub tasks: usize,
    pub slots: usize,
    pub labels: LabelSpec,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub task_id: usize,
    pub scenario: ScenarioParams,
    pub trace_seed: u64,
    pub trace: ChannelTrace,
    /// One label sequence per device, aligned with the trace slots.
    pub labels: Vec<LabelSequence>,
}

impl TaskDataset {
    pub fn from_trace(task_id: usize, scenario: ScenarioParams, trace_seed: u64, trace: ChannelTrace, spec: LabelSpec) -> Result<Self> {
        let gamma0 = scenario.fading.snr_threshold_db;
        let labels = (0..trace.devices)
            .map(|k| make_labels(trace.snr_row(k), spec, gamma0))
            .collect::<Result<Vec<_>>>()?;
        Ok(TaskDataset {
            task_id,
            scenario,
            trace_seed,
            trace,
            labels,
        })
    }

    pub fn devices(&self) -> usize {
        self.trace.devices
    }

    pub fn slots(&self) -> usize {
        self.trace.slots
    }

    pub fn gamma0_db(&self) -> f64 {
        self.scenario.fading.snr_threshold_db
    }

    pub fn label_spec(&self) -> LabelSpec {
        let l = &self.labels[0];
        LabelSpec {
            mode: l.spec_mode,
            xi: l.xi,
            tau: l.tau,
        }
    }

    pub fn observations(&self, k: usize) -> ObservationSequence {
        make_observations(&self.trace, k, self.gamma0_db(), &AffineNorm::from_threshold(self.gamma0_db()))
    }

    /// Observations and labels of device `k` as one training sequence.
    pub fn device_sequence(&self, k: usize) -> DeviceSequence {
        let labels = &self.labels[k];
        DeviceSequence {
            task_id: self.task_id,
            device: k,
            obs: self.observations(k),
            mask: labels.mask(),
            labels: labels.z.iter().map(|&z| if z == INVALID_LABEL { 0 } else { z }).collect(),
        }
    }

    /// Slots `[start, end)` with labels recomputed inside the slice, so no
    /// label looks past `end`.
    pub fn slice(&self, start: usize, end: usize) -> Result<TaskDataset> {
        let spec = self.label_spec();
        TaskDataset::from_trace(self.task_id, self.scenario.clone(), self.trace_seed, self.trace.slice(start, end), spec)
    }
}

/// Training view of one device: `T × 2K` observations, labels and the
/// validity mask of the labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSequence {
    pub task_id: usize,
    pub device: usize,
    pub obs: ObservationSequence,
    pub labels: Vec<u8>,
    pub mask: Vec<bool>,
}

impl DeviceSequence {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaDataset {
    pub config: GenerationConfig,
    pub tasks: Vec<TaskDataset>,
}

impl MetaDataset {
    pub fn devices(&self) -> usize {
        self.config.scenario.devices
    }

    pub fn slots(&self) -> usize {
        self.config.slots
    }

    /// `(task index, device)` for every per-device sequence.
    pub fn device_index(&self) -> Vec<(usize, usize)> {
        self.tasks
            .iter()
            .enumerate()
            .flat_map(|(n, t)| (0..t.devices()).map(move |k| (n, k)))
            .collect()
    }

    pub fn positive_rate(&self) -> f64 {
        let (pos, valid) = self
            .tasks
            .iter()
            .flat_map(|t| t.labels.iter())
            .fold((0usize, 0usize), |(p, v), l| (p + l.positives(), v + l.valid_len()));
        pos as f64 / valid.max(1) as f64
    }
}

pub fn build_meta_dataset(config: &GenerationConfig) -> Result<MetaDataset> {
    if config.tasks == 0 {
        return Err(Error::config("dataset needs at least one task"));
    }
    config.scenario.validate()?;
    config.labels.validate()?;
    if config.slots <= config.labels.horizon() {
        return Err(Error::SequenceTooShort {
            len: config.slots,
            needed: config.labels.horizon() + 1,
        });
    }
    let table = ArcTable::default();
    let tasks = (0..config.tasks)
        .into_par_iter()
        .map(|n| {
            let scenario = sample_scenario(&config.scenario, derive_seed(config.seed, purpose::SCENARIO, n as u64))?;
            let trace_seed = derive_seed(config.seed, purpose::TRACE, n as u64);
            let trace = simulate_traces(&scenario, config.slots, trace_seed, &table)?;
            TaskDataset::from_trace(n, scenario, trace_seed, trace, config.labels)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetaDataset {
        config: config.clone(),
        tasks,
    })
}

/// Contiguous prefix/suffix split of a task at `round(T · fraction)`.
pub fn split_sequence(task: &TaskDataset, fraction: f64) -> Result<(TaskDataset, TaskDataset)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::config(format!("split fraction {fraction} outside [0, 1]")));
    }
    let slots = task.slots();
    let cut = (slots as f64 * fraction).round() as usize;
    let needed = task.label_spec().horizon() + 1;
    for len in [cut, slots - cut] {
        if len < needed {
            return Err(Error::SequenceTooShort { len, needed });
        }
    }
    Ok((task.slice(0, cut)?, task.slice(cut, slots)?))
}
