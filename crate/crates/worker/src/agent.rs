//! Worker agent: slot accounting, task table, launch, and directive routing.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::mpsc::Sender;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use log::{info, warn};
use preempt_protocol::{
    CommandAction, CommandMessage, HeartbeatMessage, ObservedState, TaskId, TaskLaunchDescriptor,
    TaskState, TransitionEvent, WorkerId,
};
use thiserror::Error;

use crate::eventlog::EventLogFile;
use crate::local::{LocalTask, TaskCommand};
use crate::procinfo;
use crate::supervisor::Supervisor;

#[derive(Debug, Clone)]
pub struct WorkerConfig {
    pub worker_id: WorkerId,
    pub coordinator: String,
    pub slots_total: u32,
    pub max_suspended: u32,
    pub heartbeat_ms: u64,
    pub workdir: PathBuf,
}

#[derive(Debug, Error)]
pub enum WorkerError {
    #[error("no free slot ({running} running of {total})")]
    NoFreeSlot { running: u32, total: u32 },
    #[error("spawn failure: {0}")]
    SpawnFailure(String),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("task {0} already active")]
    AlreadyActive(TaskId),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

struct TaskEntry {
    shared: Arc<Mutex<LocalTask>>,
    cmd_tx: Sender<TaskCommand>,
    join: Option<std::thread::JoinHandle<()>>,
}

pub struct WorkerAgent {
    pub config: WorkerConfig,
    tasks: Mutex<BTreeMap<TaskId, TaskEntry>>,
    log: Arc<EventLogFile>,
    /// Task exits are announced here; the heartbeat loop listens so a
    /// completion triggers an immediate extra heartbeat.
    exit_tx: Sender<TaskId>,
    start: Instant,
}

impl WorkerAgent {
    pub fn new(config: WorkerConfig, exit_tx: Sender<TaskId>) -> std::io::Result<WorkerAgent> {
        std::fs::create_dir_all(&config.workdir)?;
        let log = Arc::new(EventLogFile::create(
            &config.workdir.join(format!("{}.log", config.worker_id)),
        )?);
        log.note(
            "worker",
            &format!(
                "start worker_id={} slots={} max_suspended={} swap_accounting={}",
                config.worker_id,
                config.slots_total,
                config.max_suspended,
                if procinfo::swap_accounting_supported() {
                    "supported"
                } else {
                    "unsupported"
                }
            ),
        );
        Ok(WorkerAgent {
            config,
            tasks: Mutex::new(BTreeMap::new()),
            log,
            exit_tx,
            start: Instant::now(),
        })
    }

    pub fn log(&self) -> &EventLogFile {
        &self.log
    }

    pub fn now_ms(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }

    fn running_count(&self) -> u32 {
        let tasks = self.tasks.lock().unwrap();
        tasks
            .values()
            .filter(|e| e.shared.lock().unwrap().observed_state == ObservedState::Running)
            .count() as u32
    }

    /// Spawns the task process in its own process group and starts its
    /// supervisor. A spawn failure is recorded as a FAILED task so the
    /// coordinator hears about it on the next heartbeat.
    pub fn launch(&self, descriptor: &TaskLaunchDescriptor) -> Result<(), WorkerError> {
        let running = self.running_count();
        if running >= self.config.slots_total {
            return Err(WorkerError::NoFreeSlot {
                running,
                total: self.config.slots_total,
            });
        }

        let task_id = descriptor.task_id.clone();
        let attempt = {
            let tasks = self.tasks.lock().unwrap();
            match tasks.get(&task_id) {
                Some(e) if !e.shared.lock().unwrap().observed_state.is_terminal() => {
                    return Err(WorkerError::AlreadyActive(task_id));
                }
                Some(e) => e.shared.lock().unwrap().attempt + 1,
                None => 1,
            }
        };

        let temp_dir = self.config.workdir.join(task_id.as_str());
        let _ = std::fs::remove_dir_all(&temp_dir);
        std::fs::create_dir_all(&temp_dir)?;
        let stderr_path = self.config.workdir.join(format!("{task_id}.stderr"));

        let mut cmd = Command::new(&descriptor.executable);
        cmd.arg("--input")
            .arg(&descriptor.input_path)
            .arg("--ballast-bytes")
            .arg(descriptor.ballast_bytes.to_string())
            .arg("--progress-interval")
            .arg(descriptor.progress_interval_tuples.to_string())
            .arg("--output-dir")
            .arg(&temp_dir)
            .args(&descriptor.args)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(std::fs::File::create(&stderr_path)?);
        unsafe {
            use std::os::unix::process::CommandExt;
            // Own process group so suspend/kill signals reach task-spawned
            // children too.
            cmd.pre_exec(|| {
                libc::setpgid(0, 0);
                Ok(())
            });
        }

        let child = match cmd.spawn() {
            Ok(c) => c,
            Err(e) => {
                // Exec errors surface as a FAILED report, not a silent drop.
                let failed = LocalTask {
                    task_id: task_id.clone(),
                    pid: 0,
                    attempt,
                    observed_state: ObservedState::Failed,
                    progress_fraction: 0.0,
                    resident_bytes: 0,
                    swapped_bytes: 0,
                    swap_supported: false,
                    temp_output_dir: temp_dir,
                    progress_records_while_suspended: 0,
                    resumed_markers: 0,
                    summary: None,
                    kill_requested: false,
                };
                self.log.note(
                    task_id.as_str(),
                    &format!("spawn_failure error={e} attempt={attempt}"),
                );
                self.log.transition(
                    &task_id,
                    TaskState::Pending,
                    TransitionEvent::WorkerReportedFailure,
                    TaskState::Failed,
                );
                let (cmd_tx, _cmd_rx) = std::sync::mpsc::channel();
                self.tasks.lock().unwrap().insert(
                    task_id.clone(),
                    TaskEntry {
                        shared: Arc::new(Mutex::new(failed)),
                        cmd_tx,
                        join: None,
                    },
                );
                let _ = self.exit_tx.send(task_id);
                return Err(WorkerError::SpawnFailure(e.to_string()));
            }
        };

        let pid = child.id();
        info!("{task_id}: launched pid {pid} (attempt {attempt})");
        self.log
            .transition(&task_id, TaskState::Pending, TransitionEvent::Launched, TaskState::Running);

        let shared = Arc::new(Mutex::new(LocalTask {
            task_id: task_id.clone(),
            pid,
            attempt,
            observed_state: ObservedState::Running,
            progress_fraction: 0.0,
            resident_bytes: 0,
            swapped_bytes: 0,
            swap_supported: false,
            temp_output_dir: temp_dir,
            progress_records_while_suspended: 0,
            resumed_markers: 0,
            summary: None,
            kill_requested: false,
        }));
        let (cmd_tx, cmd_rx) = std::sync::mpsc::channel();
        let supervisor = Supervisor::new(
            child,
            shared.clone(),
            self.log.clone(),
            self.exit_tx.clone(),
            cmd_rx,
        );
        let join = std::thread::Builder::new()
            .name(format!("supervise-{task_id}"))
            .spawn(move || supervisor.run())
            .expect("spawn supervisor thread");

        self.tasks.lock().unwrap().insert(
            task_id,
            TaskEntry {
                shared,
                cmd_tx,
                join: Some(join),
            },
        );
        Ok(())
    }

    fn send_command(&self, task_id: &TaskId, cmd: TaskCommand) -> Result<(), WorkerError> {
        let tasks = self.tasks.lock().unwrap();
        let entry = tasks
            .get(task_id)
            .ok_or_else(|| WorkerError::UnknownTask(task_id.clone()))?;
        if entry.cmd_tx.send(cmd).is_err() {
            // Supervisor already finished: the process is gone and its
            // terminal report stands. Idempotent no-op.
            let state = entry.shared.lock().unwrap().observed_state;
            if !state.is_terminal() {
                return Err(WorkerError::UnknownTask(task_id.clone()));
            }
        }
        Ok(())
    }

    pub fn suspend(&self, task_id: &TaskId) -> Result<(), WorkerError> {
        self.send_command(task_id, TaskCommand::Suspend)
    }

    pub fn resume(&self, task_id: &TaskId) -> Result<(), WorkerError> {
        self.send_command(task_id, TaskCommand::Resume)
    }

    pub fn kill(&self, task_id: &TaskId) -> Result<(), WorkerError> {
        self.send_command(task_id, TaskCommand::Kill)
    }

    /// Snapshot of one task's shared state.
    pub fn task(&self, task_id: &TaskId) -> Option<LocalTask> {
        self.tasks
            .lock()
            .unwrap()
            .get(task_id)
            .map(|e| e.shared.lock().unwrap().clone())
    }

    pub fn build_heartbeat(&self, sequence_no: u64) -> HeartbeatMessage {
        let tasks = self.tasks.lock().unwrap();
        let task_reports = tasks
            .values()
            .map(|e| e.shared.lock().unwrap().report())
            .collect::<Vec<_>>();
        let running = task_reports
            .iter()
            .filter(|r| r.observed_state == ObservedState::Running)
            .count() as u32;
        HeartbeatMessage {
            worker_id: self.config.worker_id.clone(),
            sequence_no,
            task_reports,
            free_slots: self.config.slots_total.saturating_sub(running),
            timestamp_ms: self.now_ms(),
        }
    }

    /// Applies a heartbeat reply's directives in order.
    pub fn apply_commands(&self, msg: &CommandMessage) {
        for d in &msg.directives {
            let result = match d.action {
                CommandAction::Launch => match &d.payload {
                    Some(descriptor) => self.launch(descriptor),
                    None => {
                        warn!("{}: LAUNCH directive without payload", d.task_id);
                        continue;
                    }
                },
                CommandAction::Suspend => self.suspend(&d.task_id),
                CommandAction::Resume => self.resume(&d.task_id),
                CommandAction::Kill => self.kill(&d.task_id),
            };
            if let Err(e) = result {
                warn!("{}: directive {:?} failed: {e}", d.task_id, d.action);
                self.log.note(
                    d.task_id.as_str(),
                    &format!("directive_error action={:?} error={e}", d.action),
                );
            }
        }
    }

    /// Kills everything still alive and joins the supervisors. Test and
    /// shutdown hygiene.
    pub fn shutdown(&self) {
        let ids: Vec<TaskId> = self.tasks.lock().unwrap().keys().cloned().collect();
        for id in &ids {
            let _ = self.kill(id);
        }
        let mut tasks = self.tasks.lock().unwrap();
        for entry in tasks.values_mut() {
            if let Some(join) = entry.join.take() {
                let _ = join.join();
            }
        }
    }
}
