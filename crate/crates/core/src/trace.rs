//! Per-iteration convergence records and their CSV form.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// `‖V_k − J*‖∞`, present only when a reference was supplied.
    pub sup_error: Option<f64>,
    /// `‖TV_k − V_k‖∞` unless the producing algorithm documents otherwise.
    pub bellman_residual: f64,
    /// `sup_error_k / sup_error_{k−1}`.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    MaxIters,
    Cycling,
    /// Ran a fixed number of iterations with no stopping test.
    Completed,
    Running,
}

/// Work done by a planner run, used for comparisons between algorithms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkCounters {
    /// Applications of `T`, `T_μ` or `T_{μ,ν}` to a full value vector.
    pub operator_applications: u64,
    pub matrix_games_solved: u64,
    /// Direct linear solves used for infinite rollouts.
    pub linear_solves: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    pub termination: Termination,
    pub work: WorkCounters,
}

impl Default for ConvergenceTrace {
    fn default() -> Self {
        ConvergenceTrace { records: Vec::new(), termination: Termination::Running, work: WorkCounters::default() }
    }
}

impl ConvergenceTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append the next iteration; the ratio is derived from the previous record.
    pub fn push(&mut self, sup_error: Option<f64>, bellman_residual: f64) {
        let iter = self.records.last().map_or(0, |r| r.iter + 1);
        let ratio = match (self.records.last().and_then(|r| r.sup_error), sup_error) {
            (Some(prev), Some(cur)) if prev > 0.0 => Some(cur / prev),
            _ => None,
        };
        self.records.push(TraceRecord { iter, sup_error, bellman_residual, ratio });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last_residual(&self) -> Option<f64> {
        self.records.last().map(|r| r.bellman_residual)
    }

    /// CSV with header `iter,sup_error,bellman_residual,ratio`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "sup_error", "bellman_residual", "ratio"])?;
        for r in &self.records {
            w.write_record([
                r.iter.to_string(),
                r.sup_error.map(fmt_f64).unwrap_or_default(),
                fmt_f64(r.bellman_residual),
                r.ratio.map(fmt_f64).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
