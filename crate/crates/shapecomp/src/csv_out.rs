//! CSV outputs: loss curves, completion traces and benchmark results.

use std::path::Path;

use serde::{Deserialize, Serialize};
use shapecomp_core::completion::CompletionTrace;
use shapecomp_core::vae::LossRecord;

use crate::error::{Error, Result};
use crate::fs::ensure_parent;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub iteration: usize,
    #[serde(rename = "L")]
    pub total: f64,
    #[serde(rename = "L_r")]
    pub recon: f64,
    #[serde(rename = "L_p")]
    pub prior: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub seen_error: f64,
    pub unseen_error: Option<f64>,
    pub objective: f64,
    pub refined: bool,
}

/// One line of the benchmark results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub case_id: String,
    pub method: String,
    pub err_seen: Option<f64>,
    pub err_unseen: Option<f64>,
    pub err_total: f64,
    pub vol_err_pct: f64,
    pub runtime_ms: f64,
}

pub const LOSS_HEADER: [&str; 4] = ["iteration", "L", "L_r", "L_p"];
pub const TRACE_HEADER: [&str; 5] = ["iter", "seen_error", "unseen_error", "objective", "refined"];
pub const RESULT_HEADER: [&str; 7] = [
    "case_id",
    "method",
    "err_seen",
    "err_unseen",
    "err_total",
    "vol_err_pct",
    "runtime_ms",
];

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    ensure_parent(path)?;
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    r.deserialize()
        .enumerate()
        .map(|(k, row)| {
            row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: k + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn loss_rows(curve: &[LossRecord]) -> Vec<LossRow> {
    curve
        .iter()
        .map(|r| LossRow {
            iteration: r.iteration,
            total: r.total,
            recon: r.recon,
            prior: r.prior,
        })
        .collect()
}

pub fn trace_rows(trace: &CompletionTrace) -> Vec<TraceRow> {
    trace
        .entries
        .iter()
        .map(|e| TraceRow {
            iter: e.iteration,
            seen_error: e.seen_error,
            unseen_error: e.unseen_error,
            objective: e.objective,
            refined: e.refined,
        })
        .collect()
}

pub fn write_loss_curve(path: &Path, curve: &[LossRecord]) -> Result<()> {
    write_rows(path, &loss_rows(curve), &LOSS_HEADER)
}

pub fn write_trace(path: &Path, trace: &CompletionTrace) -> Result<()> {
    write_rows(path, &trace_rows(trace), &TRACE_HEADER)
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_rows(path, rows, &RESULT_HEADER)
}
