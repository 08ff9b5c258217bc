//! CSV renderings of an [`EvalReport`].
//!
//! * `records.csv`: `init_kind,T_test,event_id,relative_time_or_censored`,
//!   one row per (init, adaptation length, event); censored events read
//!   `censored`.
//! * `summary.csv`: `init_kind,T_test,relative_time,cdf,events,censored`,
//!   one row per CDF step.
//! * `medians.csv`:
//!   `init_kind,T_test,events,censored,median_relative_time,false_alarm_rate`
//!   (median is `inf` when at least half the events are censored).
//! * `events.csv`: `event_id,task_id,device,onset,clean_history`, with onsets
//!   indexed from the start of the evaluation suffix.

use std::fmt::Write as _;
use std::path::Path;

use super::sweep::EvalReport;
use crate::container::write_atomic;
use crate::error::Result;

impl EvalReport {
    pub fn records_csv(&self) -> String {
        let mut out = String::from("init_kind,T_test,event_id,relative_time_or_censored\n");
        for r in &self.records {
            let time = r.relative_time.map_or_else(|| "censored".to_string(), |t| t.to_string());
            writeln!(out, "{},{},{},{}", r.init, r.t_test, r.event_id, time).expect("writing to a String");
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("init_kind,T_test,relative_time,cdf,events,censored\n");
        for s in &self.summaries {
            for (t, f) in s.cdf.times.iter().zip(&s.cdf.fractions) {
                writeln!(out, "{},{},{},{},{},{}", s.init, s.t_test, t, f, s.cdf.events, s.cdf.censored)
                    .expect("writing to a String");
            }
        }
        out
    }

    pub fn medians_csv(&self) -> String {
        let mut out = String::from("init_kind,T_test,events,censored,median_relative_time,false_alarm_rate\n");
        for s in &self.summaries {
            writeln!(
                out,
                "{},{},{},{},{},{:.6}",
                s.init, s.t_test, s.cdf.events, s.cdf.censored, s.median, s.false_alarm_rate
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn events_csv(&self) -> String {
        let mut out = String::from("event_id,task_id,device,onset,clean_history\n");
        for e in &self.events {
            writeln!(
                out,
                "{},{},{},{},{}",
                e.event_id, e.task_id, e.event.device, e.event.onset, e.event.clean_history
            )
            .expect("writing to a String");
        }
        out
    }

    /// Writes the four CSV files into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("records.csv"), self.records_csv().as_bytes())?;
        write_atomic(&dir.join("summary.csv"), self.summary_csv().as_bytes())?;
        write_atomic(&dir.join("medians.csv"), self.medians_csv().as_bytes())?;
        write_atomic(&dir.join("events.csv"), self.events_csv().as_bytes())?;
        Ok(())
    }
}
