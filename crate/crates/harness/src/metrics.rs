//! Per-run measurements and per-cell aggregates.

use preempt_protocol::eventlog::LogEntry;
use preempt_protocol::{TaskRecord, TaskState};
use preempt_scheduler::{PreemptAction, ScheduleOutcome};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One experiment run. All timestamps are coordinator-clock milliseconds;
/// sojourn counts from the trigger instant (t_h's arrival), so it includes
/// preemption latency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub primitive: String,
    pub r: f64,
    pub run_index: u32,
    pub sojourn_high_ms: u64,
    pub makespan_ms: u64,
    pub swapped_bytes_low: u64,
    /// Input tuples processed across all attempts of t_l.
    pub tuples_total_low: u64,
    pub trigger_progress: f64,
    pub attempts_low: u32,
    pub submit_low_ms: u64,
    pub trigger_instant_ms: u64,
    pub first_launch_low_ms: u64,
    pub completion_low_ms: u64,
    pub first_launch_high_ms: u64,
    pub completion_high_ms: u64,
}

impl RunMetrics {
    /// t_h runs uninterrupted under every primitive.
    pub fn duration_high_ms(&self) -> u64 {
        self.completion_high_ms - self.first_launch_high_ms
    }

    /// t_l's uninterrupted duration; only meaningful for wait runs, where
    /// nothing preempts it.
    pub fn duration_low_uninterrupted_ms(&self) -> u64 {
        self.completion_low_ms - self.first_launch_low_ms
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("incomplete run: {0}")]
    Incomplete(String),
    #[error("metrics invariant violated: {0}")]
    Invariant(String),
}

/// Extracts one run's metrics from the schedule outcome, the worker's event
/// log (for exact tuple accounting) and the input's tuple count.
pub fn compute_run_metrics(
    primitive: PreemptAction,
    r: f64,
    run_index: u32,
    outcome: &ScheduleOutcome,
    worker_log: &[LogEntry],
    total_tuples: u64,
) -> Result<RunMetrics, MetricsError> {
    let low = &outcome.low_record;
    let high = &outcome.high_record;
    let completion_low = field(low, "completion", low.completion_time_ms)?;
    let completion_high = field(high, "completion", high.completion_time_ms)?;
    let first_launch_low = field(low, "first_launch", low.first_launch_time_ms)?;
    let first_launch_high = field(high, "first_launch", high.first_launch_time_ms)?;

    let sojourn_high_ms = completion_high.saturating_sub(outcome.trigger_instant_ms);
    let makespan_ms = completion_low
        .max(completion_high)
        .saturating_sub(low.submit_time_ms);
    if sojourn_high_ms > makespan_ms {
        return Err(MetricsError::Invariant(format!(
            "sojourn {sojourn_high_ms} ms exceeds makespan {makespan_ms} ms"
        )));
    }

    let tuples_total_low = tuples_across_attempts(low, worker_log, total_tuples)?;

    Ok(RunMetrics {
        primitive: primitive.as_str().to_string(),
        r,
        run_index,
        sojourn_high_ms,
        makespan_ms,
        swapped_bytes_low: low.swapped_bytes_peak,
        tuples_total_low,
        trigger_progress: outcome.trigger_progress,
        attempts_low: low.attempt_count,
        submit_low_ms: low.submit_time_ms,
        trigger_instant_ms: outcome.trigger_instant_ms,
        first_launch_low_ms: first_launch_low,
        completion_low_ms: completion_low,
        first_launch_high_ms: first_launch_high,
        completion_high_ms: completion_high,
    })
}

fn field(rec: &TaskRecord, name: &str, v: Option<u64>) -> Result<u64, MetricsError> {
    v.ok_or_else(|| MetricsError::Incomplete(format!("{}: {name} missing", rec.task_id)))
}

/// Tuples processed across attempts: finished attempts contribute their
/// exact worker-side summary; killed attempts contribute the freshest
/// progress the worker saw, which is within one progress-report granule of
/// the truth (the process died before saying more).
fn tuples_across_attempts(
    low: &TaskRecord,
    worker_log: &[LogEntry],
    total_tuples: u64,
) -> Result<u64, MetricsError> {
    let notes = WorkerNotes::parse(worker_log, low.task_id.as_str());
    let mut tuples: u64 = 0;

    for past in &low.attempts {
        // Prefer the worker's own last-seen progress for the dead attempt.
        let progress = notes
            .final_progress
            .get(&past.attempt)
            .copied()
            .unwrap_or(past.final_progress);
        tuples += (progress * total_tuples as f64).round() as u64;
    }

    if low.state == TaskState::Succeeded {
        let summary = notes.summary_tuples.get(&low.attempt_count).copied();
        match summary {
            Some(n) => tuples += n,
            None => {
                return Err(MetricsError::Incomplete(format!(
                    "{}: no worker summary for attempt {}",
                    low.task_id, low.attempt_count
                )))
            }
        }
    } else {
        tuples += (low.progress_fraction * total_tuples as f64).round() as u64;
    }
    Ok(tuples)
}

/// Auxiliary facts the worker logs as note lines.
#[derive(Debug, Default)]
pub struct WorkerNotes {
    /// attempt -> tuples from `summary tuples=N checksum=ok attempt=K`
    pub summary_tuples: std::collections::BTreeMap<u32, u64>,
    /// attempt -> checksum ok
    pub checksum_ok: std::collections::BTreeMap<u32, bool>,
    /// attempt -> progress records seen while suspended
    pub suspended_progress_records: std::collections::BTreeMap<u32, u64>,
    /// attempt -> worker-side final progress
    pub final_progress: std::collections::BTreeMap<u32, f64>,
}

impl WorkerNotes {
    pub fn parse(log: &[LogEntry], task_id: &str) -> WorkerNotes {
        let mut out = WorkerNotes::default();
        for e in log {
            let LogEntry::Note { task_id: t, text, .. } = e else {
                continue;
            };
            if t != task_id {
                continue;
            }
            let fields: std::collections::HashMap<&str, &str> = text
                .split_whitespace()
                .filter_map(|f| f.split_once('='))
                .collect();
            let attempt: u32 = fields
                .get("attempt")
                .and_then(|v| v.parse().ok())
                .unwrap_or(1);
            if text.starts_with("summary ") {
                if let Some(n) = fields.get("tuples").and_then(|v| v.parse().ok()) {
                    out.summary_tuples.insert(attempt, n);
                }
                if let Some(v) = fields.get("checksum") {
                    out.checksum_ok.insert(attempt, *v == "ok");
                }
            } else if text.starts_with("suspend_progress_records ") {
                if let Some(n) = fields.get("count").and_then(|v| v.parse().ok()) {
                    out.suspended_progress_records.insert(attempt, n);
                }
            } else if text.starts_with("final ") {
                if let Some(p) = fields.get("progress").and_then(|v| v.parse().ok()) {
                    out.final_progress.insert(attempt, p);
                }
            }
        }
        out
    }
}

/// Per-field aggregate over one cell's repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl FieldStats {
    pub fn over(values: impl IntoIterator<Item = f64>) -> Option<FieldStats> {
        let values: Vec<f64> = values.into_iter().collect();
        if values.is_empty() {
            return None;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(FieldStats { mean, min, max })
    }

    /// Exactly: max <= 1.05 * mean and min >= 0.95 * mean.
    pub fn spread_ok(&self) -> bool {
        self.max <= 1.05 * self.mean && self.min >= 0.95 * self.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub primitive: String,
    pub r: f64,
    pub repetitions: u32,
    pub sojourn_high_ms: FieldStats,
    pub makespan_ms: FieldStats,
    pub swapped_bytes_low: FieldStats,
    pub tuples_total_low: FieldStats,
    /// Both headline metrics stayed within 5% of their means.
    pub spread_ok: bool,
}

pub fn aggregate_cell(primitive: &str, r: f64, runs: &[RunMetrics]) -> Option<AggregateMetrics> {
    let cell: Vec<&RunMetrics> = runs
        .iter()
        .filter(|m| m.primitive == primitive && (m.r - r).abs() < 1e-9)
        .collect();
    if cell.is_empty() {
        return None;
    }
    let sojourn = FieldStats::over(cell.iter().map(|m| m.sojourn_high_ms as f64))?;
    let makespan = FieldStats::over(cell.iter().map(|m| m.makespan_ms as f64))?;
    let swapped = FieldStats::over(cell.iter().map(|m| m.swapped_bytes_low as f64))?;
    let tuples = FieldStats::over(cell.iter().map(|m| m.tuples_total_low as f64))?;
    Some(AggregateMetrics {
        primitive: primitive.to_string(),
        r,
        repetitions: cell.len() as u32,
        spread_ok: sojourn.spread_ok() && makespan.spread_ok(),
        sojourn_high_ms: sojourn,
        makespan_ms: makespan,
        swapped_bytes_low: swapped,
        tuples_total_low: tuples,
    })
}
