use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stored label value for slots whose prediction window runs past the end of
/// the sequence.
pub const INVALID_LABEL: u8 = u8::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// At least one slot of the window is blocked.
    Any,
    /// Every slot of the window is blocked.
    All,
}

impl std::fmt::Display for LabelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LabelMode::Any => "any",
            LabelMode::All => "all",
        })
    }
}

/// What is being predicted: the window `[t+ξ+1, t+ξ+τ]` of a device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSpec {
    pub mode: LabelMode,
    /// Prediction delay ξ.
    pub xi: usize,
    /// Prediction interval τ.
    pub tau: usize,
}

impl LabelSpec {
    pub const fn any(xi: usize, tau: usize) -> Self {
        LabelSpec { mode: LabelMode::Any, xi, tau }
    }

    pub const fn all(xi: usize, tau: usize) -> Self {
        LabelSpec { mode: LabelMode::All, xi, tau }
    }

    /// Slots at the end of a sequence that have no label.
    pub fn horizon(&self) -> usize {
        self.xi + self.tau
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau == 0 {
            return Err(Error::config("tau must be at least 1"));
        }
        Ok(())
    }
}

impl Default for LabelSpec {
    fn default() -> Self {
        LabelSpec::any(0, 25)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSequence {
    pub spec_mode: LabelMode,
    pub xi: usize,
    pub tau: usize,
    /// One entry per slot; the last `ξ+τ` are [`INVALID_LABEL`].
    pub z: Vec<u8>,
}

impl LabelSequence {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn valid_len(&self) -> usize {
        self.z.len() - (self.xi + self.tau).min(self.z.len())
    }

    pub fn is_valid(&self, t: usize) -> bool {
        t < self.valid_len()
    }

    pub fn mask(&self) -> Vec<bool> {
        self.z.iter().map(|&z| z != INVALID_LABEL).collect()
    }

    pub fn positives(&self) -> usize {
        self.z.iter().filter(|&&z| z == 1).count()
    }
}

pub fn threshold_linear(gamma0_db: f64) -> f64 {
    10f64.powf(gamma0_db / 10.0)
}

/// Outage test shared by labels, observations and event extraction.
#[inline]
pub fn is_blocked(snr: f32, threshold: f64) -> bool {
    f64::from(snr) <= threshold
}

/// Any/all labels of one device's SNR row via prefix counts of blocked slots.
pub fn make_labels(snr: &[f32], spec: LabelSpec, gamma0_db: f64) -> Result<LabelSequence> {
    spec.validate()?;
    let len = snr.len();
    if len <= spec.horizon() {
        return Err(Error::SequenceTooShort {
            len,
            needed: spec.horizon() + 1,
        });
    }
    let threshold = threshold_linear(gamma0_db);
    let mut prefix = Vec::with_capacity(len + 1);
    prefix.push(0usize);
    let mut acc = 0;
    for &g in snr {
        acc += usize::from(is_blocked(g, threshold));
        prefix.push(acc);
    }
    let valid = len - spec.horizon();
    let mut z = Vec::with_capacity(len);
    for t in 0..valid {
        let lo = t + spec.xi + 1;
        let hi = t + spec.xi + spec.tau;
        let blocked = prefix[hi + 1] - prefix[lo];
        let label = match spec.mode {
            LabelMode::Any => blocked > 0,
            LabelMode::All => blocked == spec.tau,
        };
        z.push(u8::from(label));
    }
    z.resize(len, INVALID_LABEL);
    Ok(LabelSequence {
        spec_mode: spec.mode,
        xi: spec.xi,
        tau: spec.tau,
        z,
    })
}
