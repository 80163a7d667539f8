//! Spawns a fresh coordinator + worker pair for one experiment run, drives
//! the scheduler script against them, and collects the log artifacts.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use log::{info, warn};
use preempt_protocol::eventlog::{parse_log, LogEntry};
use preempt_protocol::TaskLaunchDescriptor;
use preempt_scheduler::{run_schedule, ControlClient, ScenarioSpec, ScheduleOutcome};
use thiserror::Error;

use crate::config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("binary not found: {0}")]
    MissingBinary(PathBuf),
    #[error("coordinator failed to announce its address")]
    NoListenAddress,
    #[error("worker never registered")]
    WorkerNeverRegistered,
    #[error("schedule failed: {0}")]
    Schedule(#[from] preempt_scheduler::ScheduleError),
    #[error("client error: {0}")]
    Client(#[from] preempt_scheduler::ClientError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("log parse error: {0}")]
    LogParse(String),
}

/// Locations of the three executables a run needs.
#[derive(Debug, Clone)]
pub struct BinPaths {
    pub coordinator: PathBuf,
    pub worker: PathBuf,
    pub task: PathBuf,
}

impl BinPaths {
    /// Looks next to the current executable (installed layout), then in the
    /// enclosing cargo target directory (development layout).
    pub fn discover() -> Result<BinPaths, RunnerError> {
        let mut candidates: Vec<PathBuf> = Vec::new();
        if let Ok(exe) = std::env::current_exe() {
            if let Some(dir) = exe.parent() {
                candidates.push(dir.to_path_buf());
                candidates.push(dir.join(".."));
            }
        }
        for dir in &candidates {
            let c = dir.join("coordinator");
            let w = dir.join("worker");
            let t = dir.join("synthetic-task");
            if c.is_file() && w.is_file() && t.is_file() {
                return Ok(BinPaths {
                    coordinator: c,
                    worker: w,
                    task: t,
                });
            }
        }
        Err(RunnerError::MissingBinary(
            candidates
                .first()
                .cloned()
                .unwrap_or_default()
                .join("coordinator"),
        ))
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        for p in [&self.coordinator, &self.worker, &self.task] {
            if !p.is_file() {
                return Err(RunnerError::MissingBinary(p.clone()));
            }
        }
        Ok(())
    }
}

/// Kills the child on drop so failed runs never leak processes.
struct ChildGuard {
    child: Child,
    name: &'static str,
}

impl ChildGuard {
    fn new(child: Child, name: &'static str) -> ChildGuard {
        ChildGuard { child, name }
    }
}

impl Drop for ChildGuard {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        } else {
            let _ = self.child.try_wait();
        }
        let _ = self.name;
    }
}

pub struct RunArtifacts {
    pub outcome: ScheduleOutcome,
    pub coordinator_log: Vec<LogEntry>,
    pub worker_log: Vec<LogEntry>,
    pub run_dir: PathBuf,
}

/// Builds the launch descriptor for one synthetic task.
pub fn task_descriptor(
    config: &ExperimentConfig,
    task_bin: &Path,
    label: &str,
    input: &Path,
    input_bytes: u64,
    ballast_bytes: u64,
) -> TaskLaunchDescriptor {
    let mut args = vec![
        "--tuple-bytes".to_string(),
        config.input.tuple_bytes.to_string(),
        "--work-factor".to_string(),
        config.task.work_factor.to_string(),
    ];
    if config.task.verify_ballast && ballast_bytes > 0 {
        args.push("--verify-ballast".to_string());
    }
    TaskLaunchDescriptor {
        task_id: label.into(),
        executable: task_bin.to_string_lossy().into_owned(),
        args,
        input_path: input.to_string_lossy().into_owned(),
        input_bytes,
        ballast_bytes,
        progress_interval_tuples: config.task.progress_interval_tuples,
    }
}

/// One full run: fresh coordinator and worker processes, one scripted
/// scenario, artifacts gathered from the event logs.
pub fn run_scenario(
    bins: &BinPaths,
    config: &ExperimentConfig,
    scenario: &ScenarioSpec,
    run_dir: &Path,
) -> Result<RunArtifacts, RunnerError> {
    std::fs::create_dir_all(run_dir)?;
    let coordinator_log_path = run_dir.join("coordinator.log");
    let worker_dir = run_dir.join("worker");

    // Coordinator first; it announces its ephemeral port on stdout.
    let mut coordinator = ChildGuard::new(
        Command::new(&bins.coordinator)
            .arg("--listen")
            .arg("127.0.0.1:0")
            .arg("--heartbeat-ms")
            .arg(config.cluster.heartbeat_ms.to_string())
            .arg("--per-task-cap-bytes")
            .arg(config.cluster.per_task_cap_bytes.to_string())
            .arg("--memory-budget-bytes")
            .arg(config.cluster.memory_budget_bytes.to_string())
            .arg("--event-log")
            .arg(&coordinator_log_path)
            .stdout(Stdio::piped())
            .stderr(std::fs::File::create(run_dir.join("coordinator.stderr"))?)
            .spawn()?,
        "coordinator",
    );
    let addr = read_listen_address(&mut coordinator.child)?;
    info!("coordinator up at {addr}");

    let worker = ChildGuard::new(
        Command::new(&bins.worker)
            .arg("--coordinator")
            .arg(&addr)
            .arg("--slots")
            .arg(config.cluster.slots.to_string())
            .arg("--max-suspended")
            .arg(config.cluster.max_suspended.to_string())
            .arg("--heartbeat-ms")
            .arg(config.cluster.heartbeat_ms.to_string())
            .arg("--workdir")
            .arg(&worker_dir)
            .arg("--id")
            .arg("w1")
            .stdout(Stdio::null())
            .stderr(std::fs::File::create(run_dir.join("worker.stderr"))?)
            .spawn()?,
        "worker",
    );

    wait_for_registration(&addr, Duration::from_secs(10))?;

    let result = run_schedule(&addr, scenario);

    // Teardown: ask the coordinator to stop (flushing its log), then kill.
    if let Ok(mut ctl) = ControlClient::connect(&addr) {
        let _ = ctl.shutdown();
    }
    drop(worker);
    drop(coordinator);

    let outcome = result?;
    let coordinator_log = read_log(&coordinator_log_path)?;
    let worker_log = read_log(&worker_dir.join("w1.log"))?;
    Ok(RunArtifacts {
        outcome,
        coordinator_log,
        worker_log,
        run_dir: run_dir.to_path_buf(),
    })
}

fn read_listen_address(child: &mut Child) -> Result<String, RunnerError> {
    let stdout = child.stdout.take().ok_or(RunnerError::NoListenAddress)?;
    let mut reader = BufReader::new(stdout);
    let mut line = String::new();
    // The announce line is printed immediately after bind; a small spin
    // guards against a crashed child.
    let deadline = Instant::now() + Duration::from_secs(10);
    while line.is_empty() && Instant::now() < deadline {
        if reader.read_line(&mut line)? == 0 {
            break;
        }
    }
    line.trim()
        .strip_prefix("LISTENING ")
        .map(|s| s.to_string())
        .ok_or(RunnerError::NoListenAddress)
}

fn wait_for_registration(addr: &str, timeout: Duration) -> Result<(), RunnerError> {
    let deadline = Instant::now() + timeout;
    while Instant::now() < deadline {
        if let Ok(mut ctl) = ControlClient::connect(addr) {
            if let Ok((_, workers)) = ctl.snapshot() {
                if workers.iter().any(|w| w.alive) {
                    return Ok(());
                }
            }
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    Err(RunnerError::WorkerNeverRegistered)
}

fn read_log(path: &Path) -> Result<Vec<LogEntry>, RunnerError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        warn!("cannot read log {}: {e}", path.display());
        RunnerError::Io(e)
    })?;
    parse_log(&text).map_err(|e| RunnerError::LogParse(e.to_string()))
}
