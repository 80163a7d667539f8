//! Experiment configuration: a TOML file (schema documented in
//! `docs/experiment-config.md`) or one of the built-in scale presets.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config invalid: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// "baseline" (primitive-comparison matrix) or "sweep" (memory
    /// footprint sweep).
    #[serde(default = "default_mode")]
    pub mode: String,
    pub cluster: ClusterConfig,
    pub input: InputConfig,
    pub task: TaskTuning,
    #[serde(default)]
    pub matrix: MatrixConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

fn default_mode() -> String {
    "baseline".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    #[serde(default = "default_heartbeat_ms")]
    pub heartbeat_ms: u64,
    #[serde(default = "default_one")]
    pub slots: u32,
    #[serde(default = "default_one")]
    pub max_suspended: u32,
    #[serde(default = "default_per_task_cap")]
    pub per_task_cap_bytes: u64,
    #[serde(default = "default_memory_budget")]
    pub memory_budget_bytes: u64,
}

fn default_heartbeat_ms() -> u64 {
    300
}
fn default_one() -> u32 {
    1
}
fn default_per_task_cap() -> u64 {
    1 << 30
}
fn default_memory_budget() -> u64 {
    8 << 30
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// Input size for t_l.
    pub bytes: u64,
    /// Input size for t_h; defaults to `bytes`.
    #[serde(default)]
    pub high_bytes: Option<u64>,
    pub tuple_bytes: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl InputConfig {
    pub fn high_bytes(&self) -> u64 {
        self.high_bytes.unwrap_or(self.bytes)
    }
}

fn default_seed() -> u64 {
    7
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskTuning {
    /// Checksum passes per tuple; calibrates task duration.
    pub work_factor: u32,
    pub progress_interval_tuples: u64,
    #[serde(default)]
    pub ballast_low_bytes: u64,
    #[serde(default)]
    pub ballast_high_bytes: u64,
    #[serde(default)]
    pub verify_ballast: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    #[serde(default = "default_primitives")]
    pub primitives: Vec<String>,
    #[serde(default = "default_r_values")]
    pub r_values: Vec<f64>,
    #[serde(default = "default_reps")]
    pub repetitions: u32,
    #[serde(default = "default_retry")]
    pub retry_limit: u32,
    #[serde(default = "default_timeout_s")]
    pub run_timeout_s: u64,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            primitives: default_primitives(),
            r_values: default_r_values(),
            repetitions: default_reps(),
            retry_limit: default_retry(),
            run_timeout_s: default_timeout_s(),
        }
    }
}

fn default_primitives() -> Vec<String> {
    vec!["wait".into(), "kill_restart".into(), "suspend_resume".into()]
}
fn default_r_values() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}
fn default_reps() -> u32 {
    3
}
fn default_retry() -> u32 {
    2
}
fn default_timeout_s() -> u64 {
    300
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub low_ballast_bytes: u64,
    pub high_ballast_bytes: Vec<u64>,
    #[serde(default = "default_sweep_r")]
    pub r: f64,
    #[serde(default = "default_one")]
    pub repetitions: u32,
    /// The memory cap the operator promises this machine (or VM/cgroup)
    /// enforces; the sweep refuses to run on an uncapped machine.
    pub declared_memory_budget_bytes: u64,
}

fn default_sweep_r() -> f64 {
    0.5
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.mode != "baseline" && self.mode != "sweep" {
            return Err(ConfigError::Invalid(format!(
                "mode must be baseline or sweep, got {}",
                self.mode
            )));
        }
        if self.input.bytes == 0 || self.input.tuple_bytes == 0 {
            return Err(ConfigError::Invalid("input sizes must be positive".into()));
        }
        for bytes in [self.input.bytes, self.input.high_bytes()] {
            if bytes % self.input.tuple_bytes != 0 {
                return Err(ConfigError::Invalid(format!(
                    "input bytes {bytes} not a multiple of tuple bytes {}",
                    self.input.tuple_bytes
                )));
            }
        }
        for p in &self.matrix.primitives {
            if preempt_scheduler::PreemptAction::parse(p).is_none() {
                return Err(ConfigError::Invalid(format!("unknown primitive {p}")));
            }
        }
        for r in &self.matrix.r_values {
            if !(r.is_finite() && 0.0 < *r && *r < 1.0) {
                return Err(ConfigError::Invalid(format!("r {r} outside (0,1)")));
            }
        }
        if self.matrix.repetitions == 0 {
            return Err(ConfigError::Invalid("repetitions must be >= 1".into()));
        }
        if self.mode == "sweep" && self.sweep.is_none() {
            return Err(ConfigError::Invalid("sweep mode needs a [sweep] table".into()));
        }
        Ok(())
    }

    pub fn total_tuples(&self) -> u64 {
        self.input.bytes / self.input.tuple_bytes
    }

    /// Desk scale: small inputs and second-scale tasks, for development and
    /// the CI acceptance runs.
    pub fn desk_scale() -> ExperimentConfig {
        ExperimentConfig {
            mode: "baseline".into(),
            cluster: ClusterConfig {
                heartbeat_ms: 100,
                slots: 1,
                max_suspended: 1,
                per_task_cap_bytes: 1 << 30,
                memory_budget_bytes: 8 << 30,
            },
            input: InputConfig {
                bytes: 64 << 20,
                high_bytes: None,
                tuple_bytes: 16 << 10,
                seed: 7,
            },
            task: TaskTuning {
                work_factor: desk_work_factor(),
                progress_interval_tuples: 32,
                ballast_low_bytes: 0,
                ballast_high_bytes: 0,
                verify_ballast: false,
            },
            matrix: MatrixConfig::default(),
            sweep: None,
        }
    }

    /// Paper scale: 512 MB inputs, 20 repetitions, the full r grid.
    pub fn paper_scale() -> ExperimentConfig {
        ExperimentConfig {
            mode: "baseline".into(),
            cluster: ClusterConfig {
                heartbeat_ms: 300,
                slots: 1,
                max_suspended: 1,
                per_task_cap_bytes: 3 << 30,
                memory_budget_bytes: 8 << 30,
            },
            input: InputConfig {
                bytes: 512 << 20,
                high_bytes: None,
                tuple_bytes: 16 << 10,
                seed: 7,
            },
            task: TaskTuning {
                work_factor: desk_work_factor(),
                progress_interval_tuples: 256,
                ballast_low_bytes: 0,
                ballast_high_bytes: 0,
                verify_ballast: false,
            },
            matrix: MatrixConfig {
                primitives: default_primitives(),
                r_values: (1..=9).map(|i| i as f64 / 10.0).collect(),
                repetitions: 20,
                retry_limit: 2,
                run_timeout_s: 1800,
            },
            sweep: None,
        }
    }
}

/// Work factor calibrated so a 64 MiB / 16 KiB-tuple input takes on the
/// order of 13 s of CPU on commodity hardware with the optimized task
/// binary. Per-machine recalibration happens by editing the config.
pub fn desk_work_factor() -> u32 {
    1170
}
