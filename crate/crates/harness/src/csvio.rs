//! CSV datasets: one row per run, one row per aggregate cell, one row per
//! sweep point. Column dictionaries are documented in `docs/csv-schema.md`.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{AggregateMetrics, RunMetrics};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {message}")]
    Schema { row: usize, message: String },
    #[error("csv error: {0}")]
    Other(String),
}

/// Flat aggregate row as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub primitive: String,
    pub r: f64,
    pub repetitions: u32,
    pub sojourn_mean_ms: f64,
    pub sojourn_min_ms: f64,
    pub sojourn_max_ms: f64,
    pub makespan_mean_ms: f64,
    pub makespan_min_ms: f64,
    pub makespan_max_ms: f64,
    pub swapped_mean_bytes: f64,
    pub swapped_min_bytes: f64,
    pub swapped_max_bytes: f64,
    pub tuples_mean: f64,
    pub tuples_min: f64,
    pub tuples_max: f64,
    pub spread_ok: bool,
}

impl From<&AggregateMetrics> for AggregateRow {
    fn from(a: &AggregateMetrics) -> Self {
        AggregateRow {
            primitive: a.primitive.clone(),
            r: a.r,
            repetitions: a.repetitions,
            sojourn_mean_ms: a.sojourn_high_ms.mean,
            sojourn_min_ms: a.sojourn_high_ms.min,
            sojourn_max_ms: a.sojourn_high_ms.max,
            makespan_mean_ms: a.makespan_ms.mean,
            makespan_min_ms: a.makespan_ms.min,
            makespan_max_ms: a.makespan_ms.max,
            swapped_mean_bytes: a.swapped_bytes_low.mean,
            swapped_min_bytes: a.swapped_bytes_low.min,
            swapped_max_bytes: a.swapped_bytes_low.max,
            tuples_mean: a.tuples_total_low.mean,
            tuples_min: a.tuples_total_low.min,
            tuples_max: a.tuples_total_low.max,
            spread_ok: a.spread_ok,
        }
    }
}

/// One footprint-sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub high_ballast_bytes: u64,
    pub run_index: u32,
    pub swapped_bytes_low: u64,
    pub sojourn_suspend_ms: u64,
    pub sojourn_kill_ms: u64,
    pub makespan_suspend_ms: u64,
    pub makespan_wait_ms: u64,
    /// (suspend - kill) / kill, percent.
    pub sojourn_degradation_pct: f64,
    /// (suspend - wait) / wait, percent.
    pub makespan_degradation_pct: f64,
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CsvError::Other(e.to_string()))?;
    for row in rows {
        w.serialize(row).map_err(|e| CsvError::Other(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a whole CSV file; schema violations carry the 1-based data row.
pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CsvError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CsvError::Other(e.to_string()))?;
    let mut rows = Vec::new();
    for (idx, rec) in r.deserialize::<T>().enumerate() {
        match rec {
            Ok(row) => rows.push(row),
            Err(e) => {
                return Err(CsvError::Schema {
                    row: idx + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(rows)
}

/// Peeks at the header to tell runs, aggregates and sweep files apart.
pub fn sniff_kind(path: &Path) -> Result<CsvKind, CsvError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CsvError::Other(e.to_string()))?;
    let headers = r
        .headers()
        .map_err(|e| CsvError::Other(e.to_string()))?
        .clone();
    let has = |name: &str| headers.iter().any(|h| h == name);
    if has("high_ballast_bytes") {
        Ok(CsvKind::Sweep)
    } else if has("sojourn_mean_ms") {
        Ok(CsvKind::Aggregates)
    } else if has("sojourn_high_ms") {
        Ok(CsvKind::Runs)
    } else {
        Err(CsvError::Schema {
            row: 0,
            message: format!("unrecognized header: {headers:?}"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    Runs,
    Aggregates,
    Sweep,
}

pub fn write_runs(path: &Path, runs: &[RunMetrics]) -> Result<(), CsvError> {
    write_rows(path, runs)
}

pub fn write_aggregates(path: &Path, aggs: &[AggregateMetrics]) -> Result<(), CsvError> {
    let rows: Vec<AggregateRow> = aggs.iter().map(AggregateRow::from).collect();
    write_rows(path, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_run() -> RunMetrics {
        RunMetrics {
            primitive: "wait".into(),
            r: 0.5,
            run_index: 0,
            sojourn_high_ms: 100,
            makespan_ms: 200,
            swapped_bytes_low: 0,
            tuples_total_low: 4096,
            trigger_progress: 0.5,
            attempts_low: 1,
            submit_low_ms: 0,
            trigger_instant_ms: 10,
            first_launch_low_ms: 1,
            completion_low_ms: 150,
            first_launch_high_ms: 151,
            completion_high_ms: 200,
        }
    }

    #[test]
    fn runs_round_trip_and_sniff() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        let runs = vec![sample_run()];
        write_runs(&path, &runs).unwrap();
        assert_eq!(sniff_kind(&path).unwrap(), CsvKind::Runs);
        let back: Vec<RunMetrics> = read_rows(&path).unwrap();
        assert_eq!(back, runs);
    }

    #[test]
    fn schema_mismatch_reports_row_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "primitive,r,run_index,sojourn_high_ms,makespan_ms,swapped_bytes_low,tuples_total_low,trigger_progress,attempts_low,submit_low_ms,trigger_instant_ms,first_launch_low_ms,completion_low_ms,first_launch_high_ms,completion_high_ms\n\
             wait,0.5,0,100,200,0,4096,0.5,1,0,10,1,150,151,200\n\
             wait,oops,1,100,200,0,4096,0.5,1,0,10,1,150,151,200\n",
        )
        .unwrap();
        let err = read_rows::<RunMetrics>(&path).unwrap_err();
        match err {
            CsvError::Schema { row, .. } => assert_eq!(row, 2),
            other => panic!("expected schema error, got {other}"),
        }
    }
}
