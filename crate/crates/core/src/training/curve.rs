use std::fmt::Write as _;
use std::path::Path;

use crate::container::write_atomic;
use crate::error::Result;

/// One line of a training curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub iteration: u64,
    pub train_loss: f64,
    /// Meta-test (outer half) loss; absent for joint training.
    pub test_loss: Option<f64>,
    pub wall_clock_s: f64,
}

pub const CURVE_HEADER: &str = "iteration,meta_train_loss,meta_test_loss,wall_clock_s";

/// CSV with [`CURVE_HEADER`] columns; a missing test loss is left empty.
pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in rows {
        let test = r.test_loss.map(|l| l.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{:.3}", r.iteration, r.train_loss, test, r.wall_clock_s).expect("writing to a String");
    }
    out
}

pub fn write_curve(path: &Path, rows: &[CurveRow]) -> Result<()> {
    write_atomic(path, curve_csv(rows).as_bytes())
}
