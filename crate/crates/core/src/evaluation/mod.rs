//! Baselines and metrics: naive forecaster, blockage-onset events, prediction
//! times, their CDFs and the adaptation-length sweep.

mod cdf;
mod events;
mod report;
mod sweep;

pub use cdf::{build_cdf, cdf_of_times, median_of_times, median_relative_time, Cdf};
pub use events::{extract_onset_events, measure_prediction_times, naive_forecast, OnsetEvent, PredictionTimeRecord};
pub use sweep::{
    adaptation_sweep, model_probabilities, naive_probabilities, oracle_probabilities, EvalConfig, EvalReport, EventRow,
    InitKind, Initialization, RecordRow, SummaryEntry,
};
