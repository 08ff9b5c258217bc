use serde::{Deserialize, Serialize};

use super::events::PredictionTimeRecord;
use crate::error::{Error, Result};

/// Empirical CDF of relative prediction times. Censored events count in the
/// denominator only, so the curve tops out at `1 - censored/events`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cdf {
    /// Distinct uncensored relative times, ascending.
    pub times: Vec<usize>,
    /// Fraction of all events with relative time `<= times[i]`.
    pub fractions: Vec<f64>,
    pub events: usize,
    pub censored: usize,
}

impl Cdf {
    /// Value of the CDF at `t`.
    pub fn at(&self, t: usize) -> f64 {
        match self.times.partition_point(|&x| x <= t) {
            0 => 0.0,
            i => self.fractions[i - 1],
        }
    }
}

pub fn build_cdf(records: &[PredictionTimeRecord]) -> Result<Cdf> {
    cdf_of_times(&records.iter().map(|r| r.relative_time).collect::<Vec<_>>())
}

/// [`build_cdf`] over bare relative times, `None` marking a censored event.
pub fn cdf_of_times(records: &[Option<usize>]) -> Result<Cdf> {
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    let mut fired: Vec<usize> = records.iter().filter_map(|&r| r).collect();
    fired.sort_unstable();
    let total = records.len() as f64;
    let mut times = Vec::new();
    let mut fractions = Vec::new();
    for (i, &t) in fired.iter().enumerate() {
        if fired.get(i + 1) != Some(&t) {
            times.push(t);
            fractions.push((i + 1) as f64 / total);
        }
    }
    Ok(Cdf {
        times,
        fractions,
        events: records.len(),
        censored: records.len() - fired.len(),
    })
}

/// Median relative time with censored events treated as +∞; the mean of the
/// two middle values for an even count.
pub fn median_relative_time(records: &[PredictionTimeRecord]) -> Option<f64> {
    median_of_times(&records.iter().map(|r| r.relative_time).collect::<Vec<_>>())
}

pub fn median_of_times(records: &[Option<usize>]) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = records.iter().map(|r| r.map_or(f64::INFINITY, |t| t as f64)).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}
