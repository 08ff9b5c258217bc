use serde::{Deserialize, Serialize};

use super::labels::{is_blocked, threshold_linear};
use crate::scenario::ChannelTrace;

/// Affine map applied to SNR in dB: `feature = (dB - offset_db) / scale`.
/// Slots at or below the outage threshold carry `masked_value` instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineNorm {
    pub offset_db: f64,
    pub scale: f64,
    pub masked_value: f32,
}

impl AffineNorm {
    /// Maps the threshold to 0 and 0 dB to 1.
    pub fn from_threshold(gamma0_db: f64) -> Self {
        AffineNorm {
            offset_db: gamma0_db,
            scale: gamma0_db.abs().max(1.0),
            masked_value: 0.0,
        }
    }

    pub fn feature(&self, snr: f32) -> f32 {
        let db = 10.0 * f64::from(snr).log10();
        ((db - self.offset_db) / self.scale) as f32
    }
}

/// Row-major `T × 2K` observation matrix for one target device.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl ObservationSequence {
    pub fn rows(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    /// Rows `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> ObservationSequence {
        ObservationSequence {
            dim: self.dim,
            data: self.data[start * self.dim..end * self.dim].to_vec(),
        }
    }
}

/// Device order used for a given target: the target first, then the others
/// in ascending index.
pub fn device_order(devices: usize, target: usize) -> impl Iterator<Item = usize> {
    std::iter::once(target).chain((0..devices).filter(move |&j| j != target))
}

/// Observation rows `(blocked_flag, feature)` for every device, target first.
pub fn make_observations(trace: &ChannelTrace, target: usize, gamma0_db: f64, norm: &AffineNorm) -> ObservationSequence {
    assert!(target < trace.devices, "target device {target} out of range");
    let threshold = threshold_linear(gamma0_db);
    let dim = 2 * trace.devices;
    let mut data = vec![0.0f32; dim * trace.slots];
    for (slot_in_row, j) in device_order(trace.devices, target).enumerate() {
        let col = 2 * slot_in_row;
        for (t, &g) in trace.snr_row(j).iter().enumerate() {
            let cell = &mut data[t * dim + col..t * dim + col + 2];
            if is_blocked(g, threshold) {
                cell[0] = 1.0;
                cell[1] = norm.masked_value;
            } else {
                cell[0] = 0.0;
                cell[1] = norm.feature(g);
            }
        }
    }
    ObservationSequence { dim, data }
}
