//! The primitive-comparison matrix: every primitive at every threshold for
//! N repetitions, with per-cell retries. Cells are never silently dropped:
//! a cell that exhausts its retries fails the matrix with a full list of
//! what broke.

use log::{info, warn};
use preempt_scheduler::PreemptAction;
use thiserror::Error;

use crate::metrics::{aggregate_cell, AggregateMetrics, RunMetrics};

#[derive(Debug, Clone)]
pub struct MatrixSpec {
    pub primitives: Vec<PreemptAction>,
    pub r_values: Vec<f64>,
    pub repetitions: u32,
    pub retry_limit: u32,
}

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("{0} cell(s) failed after retries:\n{1}")]
    CellsFailed(usize, String),
}

#[derive(Debug, Clone)]
pub struct MatrixData {
    pub runs: Vec<RunMetrics>,
    pub aggregates: Vec<AggregateMetrics>,
}

/// Executes one run of one cell. The production executor spawns real
/// processes; tests substitute lighter ones.
pub trait RunExecutor {
    fn execute(
        &mut self,
        primitive: PreemptAction,
        r: f64,
        run_index: u32,
    ) -> Result<RunMetrics, String>;
}

impl<F> RunExecutor for F
where
    F: FnMut(PreemptAction, f64, u32) -> Result<RunMetrics, String>,
{
    fn execute(
        &mut self,
        primitive: PreemptAction,
        r: f64,
        run_index: u32,
    ) -> Result<RunMetrics, String> {
        self(primitive, r, run_index)
    }
}

pub fn run_experiment_matrix(
    spec: &MatrixSpec,
    executor: &mut dyn RunExecutor,
) -> Result<MatrixData, MatrixError> {
    let mut runs = Vec::new();
    let mut failures: Vec<String> = Vec::new();

    for &primitive in &spec.primitives {
        for &r in &spec.r_values {
            for rep in 0..spec.repetitions {
                let mut attempt = 0;
                loop {
                    match executor.execute(primitive, r, rep) {
                        Ok(m) => {
                            info!(
                                "cell {primitive} r={r} rep={rep}: sojourn {} ms makespan {} ms",
                                m.sojourn_high_ms, m.makespan_ms
                            );
                            runs.push(m);
                            break;
                        }
                        Err(e) if attempt < spec.retry_limit => {
                            attempt += 1;
                            warn!(
                                "cell {primitive} r={r} rep={rep} failed (attempt {attempt}): {e}; retrying"
                            );
                        }
                        Err(e) => {
                            failures.push(format!(
                                "  {primitive} r={r} rep={rep}: {e} (after {} attempts)",
                                attempt + 1
                            ));
                            break;
                        }
                    }
                }
            }
        }
    }

    if !failures.is_empty() {
        return Err(MatrixError::CellsFailed(failures.len(), failures.join("\n")));
    }

    let mut aggregates = Vec::new();
    for &primitive in &spec.primitives {
        for &r in &spec.r_values {
            if let Some(a) = aggregate_cell(primitive.as_str(), r, &runs) {
                aggregates.push(a);
            }
        }
    }
    Ok(MatrixData { runs, aggregates })
}
