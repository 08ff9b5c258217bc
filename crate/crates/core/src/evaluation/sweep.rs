use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cdf::{cdf_of_times, median_of_times, Cdf};
use super::events::{extract_onset_events, measure_prediction_times, naive_forecast, OnsetEvent};
use crate::dataset::{LabelSequence, ObservationSequence, TaskDataset};
use crate::error::{Error, Result};
use crate::nn::{forward_sequence, ModelParams, Real, RecurrentState};
use crate::training::{adapt, AdaptConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Maml,
    Joint,
    Random,
    Naive,
}

impl InitKind {
    pub const ALL: [InitKind; 4] = [InitKind::Maml, InitKind::Joint, InitKind::Random, InitKind::Naive];

    pub fn as_str(self) -> &'static str {
        match self {
            InitKind::Maml => "maml",
            InitKind::Joint => "joint",
            InitKind::Random => "random",
            InitKind::Naive => "naive",
        }
    }
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InitKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown init kind `{s}` (expected maml, joint, random or naive)")))
    }
}

/// A starting point for adaptation. The naive forecaster has no parameters.
#[derive(Debug, Clone)]
pub struct Initialization<F> {
    pub kind: InitKind,
    pub params: Option<ModelParams<F>>,
}

impl<F> Initialization<F> {
    pub fn naive() -> Self {
        Initialization {
            kind: InitKind::Naive,
            params: None,
        }
    }

    pub fn model(kind: InitKind, params: ModelParams<F>) -> Self {
        Initialization {
            kind,
            params: Some(params),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Adaptation prefix lengths to sweep.
    pub t_test: Vec<usize>,
    /// Slots reserved for adaptation at the start of every evaluation task;
    /// evaluation runs on the rest. 0 means the largest `t_test`.
    pub adapt_slots: usize,
    /// Unblocked slots required before an onset for it to count.
    pub clean_window: usize,
    /// Slots after the onset still inside the measurement window.
    pub horizon: usize,
    /// A prediction fires when the output is strictly above this value.
    pub threshold: f64,
    pub inits: Vec<InitKind>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            t_test: vec![100, 500, 2000],
            adapt_slots: 0,
            clean_window: 50,
            horizon: 25,
            threshold: 0.5,
            inits: InitKind::ALL.to_vec(),
        }
    }
}

impl EvalConfig {
    pub fn eval_start(&self) -> usize {
        if self.adapt_slots > 0 {
            self.adapt_slots
        } else {
            self.t_test.iter().copied().max().unwrap_or(0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_test.is_empty() {
            return Err(Error::config("eval.t_test must list at least one length"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::config("eval.threshold must lie in (0, 1)"));
        }
        let start = self.eval_start();
        if let Some(&t) = self.t_test.iter().find(|&&t| t > start) {
            return Err(Error::Overlap { adapt: t, eval_start: start });
        }
        Ok(())
    }
}

/// Predictor outputs over a whole sequence, starting from the zero state.
pub fn model_probabilities<F: Real>(p: &ModelParams<F>, obs: &ObservationSequence) -> Result<Vec<f64>> {
    let (probs, _) = forward_sequence(p, &obs.data, &RecurrentState::zeros(p.dims().lstm_units))?;
    Ok(probs.into_iter().map(Real::as_f64).collect())
}

pub fn naive_probabilities(obs: &ObservationSequence) -> Vec<f64> {
    (0..obs.rows()).map(|t| naive_forecast(obs.row(t))).collect()
}

/// Outputs of the ideal predictor: the true label, 0 where undefined.
pub fn oracle_probabilities(labels: &LabelSequence) -> Vec<f64> {
    labels
        .z
        .iter()
        .map(|&z| if z == 1 { 1.0 } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRow {
    pub event_id: usize,
    pub task_id: usize,
    pub event: OnsetEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordRow {
    pub init: InitKind,
    pub t_test: usize,
    pub event_id: usize,
    pub relative_time: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub init: InitKind,
    pub t_test: usize,
    pub cdf: Cdf,
    /// Censored events count as +∞.
    pub median: f64,
    /// Share of evaluation slots labelled 0 where the output is above the
    /// threshold, over the devices that have events.
    pub false_alarm_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub events: Vec<EventRow>,
    /// Ordered by init (as configured), then `t_test`, then event id.
    pub records: Vec<RecordRow>,
    pub summaries: Vec<SummaryEntry>,
}

impl EvalReport {
    pub fn summary(&self, init: InitKind, t_test: usize) -> Option<&SummaryEntry> {
        self.summaries.iter().find(|s| s.init == init && s.t_test == t_test)
    }

    pub fn median(&self, init: InitKind, t_test: usize) -> Option<f64> {
        self.summary(init, t_test).map(|s| s.median)
    }
}

/// For every init and adaptation length, adapts each device's predictor on
/// the first `t_test` slots of its task and measures prediction times on the
/// evaluation suffix that starts at [`EvalConfig::eval_start`]. The suffix,
/// its events and the recurrent start state are the same for every init.
pub fn adaptation_sweep<F: Real>(
    inits: &[Initialization<F>],
    tasks: &[TaskDataset],
    adapt_cfg: &AdaptConfig,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    if inits.is_empty() {
        return Err(Error::config("evaluation needs at least one initialization"));
    }
    let start = cfg.eval_start();
    let mut suffixes = Vec::with_capacity(tasks.len());
    let mut prefixes = Vec::with_capacity(tasks.len());
    for task in tasks {
        let spec = task.label_spec();
        if cfg.clean_window < spec.horizon() {
            return Err(Error::config(format!(
                "eval.clean_window {} is shorter than xi + tau = {}",
                cfg.clean_window,
                spec.horizon()
            )));
        }
        if task.slots() <= start {
            return Err(Error::Overlap {
                adapt: start,
                eval_start: task.slots(),
            });
        }
        suffixes.push(task.slice(start, task.slots())?);
        prefixes.push(
            cfg.t_test
                .iter()
                .map(|&t| if t == 0 { Ok(None) } else { task.slice(0, t).map(Some) })
                .collect::<Result<Vec<_>>>()?,
        );
    }

    let mut units = Vec::new();
    let mut events = Vec::new();
    for (ti, suffix) in suffixes.iter().enumerate() {
        for k in 0..suffix.devices() {
            let found = extract_onset_events(suffix.trace.snr_row(k), k, suffix.gamma0_db(), cfg.clean_window);
            if found.is_empty() {
                continue;
            }
            let first_id = events.len();
            events.extend(found.iter().enumerate().map(|(i, &event)| EventRow {
                event_id: first_id + i,
                task_id: suffix.task_id,
                event,
            }));
            units.push((ti, k, first_id, found));
        }
    }

    let per_unit = units
        .par_iter()
        .map(|(ti, k, first_id, found)| {
            let suffix = &suffixes[*ti];
            let spec = suffix.label_spec();
            let obs = suffix.observations(*k);
            let labels = &suffix.labels[*k].z;
            let mut rows = Vec::new();
            let mut alarms = Vec::new();
            let mut push = |init: InitKind, t_test: usize, probs: &[f64]| {
                let recs = measure_prediction_times(probs, found, spec.xi, spec.tau, cfg.horizon, cfg.threshold);
                rows.extend(recs.iter().enumerate().map(|(i, r)| RecordRow {
                    init,
                    t_test,
                    event_id: first_id + i,
                    relative_time: r.relative_time,
                }));
                let negatives = labels.iter().filter(|&&z| z == 0).count();
                let false_alarms = labels
                    .iter()
                    .zip(probs)
                    .filter(|&(&z, &p)| z == 0 && p > cfg.threshold)
                    .count();
                alarms.push((init, t_test, false_alarms, negatives));
            };
            for init in inits {
                match &init.params {
                    None => {
                        let probs = naive_probabilities(&obs);
                        for &t in &cfg.t_test {
                            push(init.kind, t, &probs);
                        }
                    }
                    Some(theta) => {
                        for (j, &t) in cfg.t_test.iter().enumerate() {
                            let phi = match &prefixes[*ti][j] {
                                None => theta.clone(),
                                Some(prefix) => adapt(theta, (&prefix.device_sequence(*k)).into(), adapt_cfg)?,
                            };
                            push(init.kind, t, &model_probabilities(&phi, &obs)?);
                        }
                    }
                }
            }
            Ok((rows, alarms))
        })
        .collect::<Result<Vec<_>>>()?;

    let rank = |kind: InitKind| inits.iter().position(|i| i.kind == kind).unwrap_or(usize::MAX);
    let t_rank = |t: usize| cfg.t_test.iter().position(|&x| x == t).unwrap_or(usize::MAX);
    let mut records = Vec::new();
    let mut alarms = Vec::new();
    for (rows, counts) in per_unit {
        records.extend(rows);
        alarms.extend(counts);
    }
    records.sort_by_key(|r| (rank(r.init), t_rank(r.t_test), r.event_id));

    let mut summaries = Vec::new();
    for init in inits {
        for &t in &cfg.t_test {
            let times: Vec<Option<usize>> = records
                .iter()
                .filter(|r| r.init == init.kind && r.t_test == t)
                .map(|r| r.relative_time)
                .collect();
            let (fa, neg) = alarms
                .iter()
                .filter(|a| a.0 == init.kind && a.1 == t)
                .fold((0, 0), |acc, a| (acc.0 + a.2, acc.1 + a.3));
            summaries.push(SummaryEntry {
                init: init.kind,
                t_test: t,
                cdf: cdf_of_times(&times)?,
                median: median_of_times(&times).unwrap_or(f64::INFINITY),
                false_alarm_rate: if neg == 0 { 0.0 } else { fa as f64 / neg as f64 },
            });
        }
    }
    Ok(EvalReport {
        events,
        records,
        summaries,
    })
}
