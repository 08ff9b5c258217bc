use serde::{Deserialize, Serialize};

use crate::dataset::{is_blocked, threshold_linear};

/// First blocked slot after a run of unblocked slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnsetEvent {
    pub device: usize,
    /// Onset slot `t0`: blocked at `t0`, unblocked at `t0 - 1`.
    pub onset: usize,
    /// Unblocked slots immediately before `t0`.
    pub clean_history: usize,
}

/// Onsets of device `device` whose preceding `clean_window` slots are all
/// unblocked. Onsets closer than `clean_window` to the start are skipped.
pub fn extract_onset_events(snr_row: &[f32], device: usize, gamma0_db: f64, clean_window: usize) -> Vec<OnsetEvent> {
    let threshold = threshold_linear(gamma0_db);
    let mut events = Vec::new();
    let mut run = 0usize;
    for (t, &g) in snr_row.iter().enumerate() {
        if is_blocked(g, threshold) {
            if run >= clean_window.max(1) {
                events.push(OnsetEvent {
                    device,
                    onset: t,
                    clean_history: run,
                });
            }
            run = 0;
        } else {
            run += 1;
        }
    }
    events
}

/// Outcome of watching a predictor around one onset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionTimeRecord {
    pub event: OnsetEvent,
    /// First slot in the measurement window with output above threshold.
    pub fire: Option<usize>,
    /// `fire - (t0 - ξ - τ)`; `None` when censored.
    pub relative_time: Option<usize>,
}

impl PredictionTimeRecord {
    pub fn censored(&self) -> bool {
        self.fire.is_none()
    }
}

/// Measures, for each event, the first slot in `[t0 - ξ - τ, t0 + horizon]`
/// where `probs` (the predictor's output for every slot of the sequence)
/// exceeds `threshold`.
pub fn measure_prediction_times(
    probs: &[f64],
    events: &[OnsetEvent],
    xi: usize,
    tau: usize,
    horizon: usize,
    threshold: f64,
) -> Vec<PredictionTimeRecord> {
    events
        .iter()
        .map(|&event| {
            let start = event.onset.saturating_sub(xi + tau);
            let end = (event.onset + horizon).min(probs.len().saturating_sub(1));
            let fire = (start..=end).find(|&t| probs[t] > threshold);
            PredictionTimeRecord {
                event,
                fire,
                relative_time: fire.map(|f| f - start),
            }
        })
        .collect()
}

/// Naive forecaster: the blocked flag of the target device (first entry of
/// the observation row).
pub fn naive_forecast(obs_row: &[f32]) -> f64 {
    f64::from(obs_row[0])
}
