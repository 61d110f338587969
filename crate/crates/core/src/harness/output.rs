use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::protocol::{Algorithm, TrainingRun};

/// Version of every JSON summary written by the harness.
pub const SUMMARY_SCHEMA: u32 = 1;

/// One line of a per-round metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub round: usize,
    pub algorithm: Algorithm,
    pub accuracy: f64,
    pub loss: f64,
    pub wall_clock_s: f64,
    pub sum_objective_s: f64,
    pub comm_s: f64,
    pub compute_s: f64,
}

pub fn write_metrics_csv(path: &Path, runs: &[(Algorithm, &TrainingRun)]) -> Result<()> {
    let rows = runs.iter().flat_map(|(alg, run)| {
        run.rounds.iter().map(move |r| MetricsRow {
            round: r.round,
            algorithm: *alg,
            accuracy: r.accuracy,
            loss: r.loss,
            wall_clock_s: r.latency.wall_clock_s,
            sum_objective_s: r.latency.sum_objective_s,
            comm_s: r.latency.comm_s,
            compute_s: r.latency.compute_s,
        })
    });
    write_rows(path, rows)
}

pub(crate) fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
