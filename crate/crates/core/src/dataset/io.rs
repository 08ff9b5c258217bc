//! Dataset container.
//!
//! Header fields: `format`, `version`, `tasks`, `devices`, `slots`, `mode`,
//! `xi`, `tau`, `generation` (the full [`GenerationConfig`]), `task_meta`
//! (per task: `task_id`, `scenario`, `trace_seed`), `payload_bytes`, `sha256`.
//!
//! Payload, for each task in order:
//! 1. SNR, `K × T` little-endian f32, device-major;
//! 2. attenuation ζ, same layout;
//! 3. labels, `K × T` bytes, device-major, `0`/`1`, `255` for the unlabelled tail.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{GenerationConfig, LabelSequence, MetaDataset, TaskDataset, INVALID_LABEL};
use crate::container::{self, PayloadReader};
use crate::error::{Error, Result};
use crate::scenario::{ChannelTrace, ScenarioParams};

pub const DATASET_MAGIC: &[u8; 8] = b"BLKPDSET";
pub const DATASET_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TaskMeta {
    task_id: usize,
    trace_seed: u64,
    scenario: ScenarioParams,
}

pub fn encode_dataset(ds: &MetaDataset) -> Result<Vec<u8>> {
    let spec = ds.config.labels;
    let mut header = Map::new();
    header.insert("format".into(), Value::from("blockpred-dataset"));
    header.insert("tasks".into(), Value::from(ds.tasks.len()));
    header.insert("devices".into(), Value::from(ds.devices()));
    header.insert("slots".into(), Value::from(ds.slots()));
    header.insert("mode".into(), serde_json::to_value(spec.mode)?);
    header.insert("xi".into(), Value::from(spec.xi));
    header.insert("tau".into(), Value::from(spec.tau));
    header.insert("generation".into(), serde_json::to_value(&ds.config)?);
    let meta: Vec<TaskMeta> = ds
        .tasks
        .iter()
        .map(|t| TaskMeta {
            task_id: t.task_id,
            trace_seed: t.trace_seed,
            scenario: t.scenario.clone(),
        })
        .collect();
    header.insert("task_meta".into(), serde_json::to_value(meta)?);

    let mut payload = Vec::new();
    for task in &ds.tasks {
        if task.devices() != ds.devices() || task.slots() != ds.slots() {
            return Err(Error::Format(format!(
                "task {} has shape {}x{}, dataset declares {}x{}",
                task.task_id,
                task.devices(),
                task.slots(),
                ds.devices(),
                ds.slots()
            )));
        }
        container::push_f32s(&mut payload, &task.trace.snr);
        container::push_f32s(&mut payload, &task.trace.zeta);
        for l in &task.labels {
            payload.extend_from_slice(&l.z);
        }
    }
    container::encode(DATASET_MAGIC, DATASET_VERSION, header, &payload)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<MetaDataset> {
    let (header, payload) = container::decode(DATASET_MAGIC, DATASET_VERSION, bytes)?;
    let field = |name: &str| {
        header
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Format(format!("header is missing `{name}`")))
    };
    let config: GenerationConfig = serde_json::from_value(field("generation")?)?;
    let meta: Vec<TaskMeta> = serde_json::from_value(field("task_meta")?)?;
    let tasks_declared: usize = serde_json::from_value(field("tasks")?)?;
    let devices: usize = serde_json::from_value(field("devices")?)?;
    let slots: usize = serde_json::from_value(field("slots")?)?;
    if meta.len() != tasks_declared || devices != config.scenario.devices || slots != config.slots {
        return Err(Error::Format("header fields disagree with each other".into()));
    }
    let spec = config.labels;
    let cells = devices * slots;
    let mut reader = PayloadReader::new(payload);
    let mut tasks = Vec::with_capacity(meta.len());
    for m in meta {
        let snr = reader.f32s(cells)?;
        let zeta = reader.f32s(cells)?;
        let raw = reader.take(cells)?;
        let valid = slots.saturating_sub(spec.horizon());
        let labels = raw
            .chunks_exact(slots)
            .map(|z| {
                let tail_ok = z[valid..].iter().all(|&v| v == INVALID_LABEL);
                let head_ok = z[..valid].iter().all(|&v| v <= 1);
                if !(tail_ok && head_ok) {
                    return Err(Error::Format(format!("task {} has malformed labels", m.task_id)));
                }
                Ok(LabelSequence {
                    spec_mode: spec.mode,
                    xi: spec.xi,
                    tau: spec.tau,
                    z: z.to_vec(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        tasks.push(TaskDataset {
            task_id: m.task_id,
            scenario: m.scenario,
            trace_seed: m.trace_seed,
            trace: ChannelTrace {
                devices,
                slots,
                snr,
                zeta,
            },
            labels,
        });
    }
    reader.finish()?;
    Ok(MetaDataset { config, tasks })
}

pub fn save_dataset(ds: &MetaDataset, path: &Path) -> Result<()> {
    container::write_atomic(path, &encode_dataset(ds)?)
}

pub fn load_dataset(path: &Path) -> Result<MetaDataset> {
    decode_dataset(&std::fs::read(path)?)
}

/// Long-format CSV of one task's trace:
/// `slot,device,snr_linear,snr_db,zeta,blocked`.
pub fn export_trace_csv(task: &TaskDataset, path: &Path) -> Result<()> {
    let mut out = String::from("slot,device,snr_linear,snr_db,zeta,blocked\n");
    let threshold = super::labels::threshold_linear(task.gamma0_db());
    for t in 0..task.slots() {
        for k in 0..task.devices() {
            let g = task.trace.snr_row(k)[t];
            out.push_str(&format!(
                "{t},{k},{g},{:.4},{},{}\n",
                10.0 * f64::from(g).log10(),
                task.trace.zeta_row(k)[t],
                u8::from(super::is_blocked(g, threshold))
            ));
        }
    }
    container::write_atomic(path, out.as_bytes())
}
