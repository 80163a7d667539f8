//! Experiment harness: orchestrates coordinator + worker + scheduler for
//! repeated runs per configuration point, computes sojourn/makespan/swap
//! metrics, aggregates them, and renders CSV tables and plots.

pub mod config;
pub mod csvio;
pub mod matrix;
pub mod metrics;
pub mod oracle;
pub mod plot;
pub mod report;
pub mod runner;
pub mod stats;
pub mod sweep;

pub use config::{ExperimentConfig, SweepConfig};
pub use matrix::{run_experiment_matrix, MatrixData, MatrixSpec, RunExecutor};
pub use metrics::{
    aggregate_cell, compute_run_metrics, AggregateMetrics, FieldStats, RunMetrics, WorkerNotes,
};
pub use oracle::{timeline_oracle, OracleError, OverheadModel, TimelinePrediction};
pub use runner::{run_scenario, task_descriptor, BinPaths, RunArtifacts, RunnerError};
pub use sweep::{environment_check, footprint_sweep, HostMemory, SweepData, SweepError, SweepSpec};
