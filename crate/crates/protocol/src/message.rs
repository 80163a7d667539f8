//! Coordinator/worker message vocabulary and the record types they carry.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::state::{TaskState, TransitionEvent};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub String);

impl TaskId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for TaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TaskId {
    fn from(s: &str) -> Self {
        TaskId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorkerId(pub String);

impl WorkerId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for WorkerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for WorkerId {
    fn from(s: &str) -> Self {
        WorkerId(s.to_string())
    }
}

/// Two-level priority: the experiment runs one high- and one low-priority task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Priority {
    High,
    Low,
}

/// Task states a worker can actually observe and report. Everything else
/// (intent and in-flight states) exists only in the coordinator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObservedState {
    Running,
    Suspended,
    Succeeded,
    Failed,
    Killed,
}

impl ObservedState {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            ObservedState::Succeeded | ObservedState::Failed | ObservedState::Killed
        )
    }
}

/// Per-task status line inside a heartbeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task_id: TaskId,
    pub observed_state: ObservedState,
    pub progress_fraction: f64,
    pub resident_bytes: u64,
    pub swapped_bytes: u64,
}

/// Periodic (and completion-triggered) status message from a worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeartbeatMessage {
    pub worker_id: WorkerId,
    pub sequence_no: u64,
    pub task_reports: Vec<TaskReport>,
    pub free_slots: u32,
    /// Worker-local monotonic clock, milliseconds.
    pub timestamp_ms: u64,
}

/// Everything a worker needs to start one synthetic task process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskLaunchDescriptor {
    pub task_id: TaskId,
    pub executable: String,
    /// Extra arguments appended verbatim after the standard flags.
    pub args: Vec<String>,
    pub input_path: String,
    pub input_bytes: u64,
    pub ballast_bytes: u64,
    /// Emit a progress record every this many tuples.
    pub progress_interval_tuples: u64,
}

impl TaskLaunchDescriptor {
    pub fn validate(&self) -> Result<(), String> {
        if self.input_bytes == 0 {
            return Err("descriptor input_bytes must be > 0".into());
        }
        if self.progress_interval_tuples == 0 {
            return Err("descriptor progress_interval_tuples must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CommandAction {
    Launch,
    Suspend,
    Resume,
    Kill,
}

/// One piggybacked command for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Directive {
    pub task_id: TaskId,
    pub action: CommandAction,
    /// Launch descriptor for `Launch`, empty otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<TaskLaunchDescriptor>,
}

/// Heartbeat reply: every directive queued for the worker, in order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CommandMessage {
    pub directives: Vec<Directive>,
}

impl CommandMessage {
    pub fn empty() -> Self {
        CommandMessage::default()
    }

    pub fn is_empty(&self) -> bool {
        self.directives.is_empty()
    }

    /// At most one directive per task, and payload present iff the action
    /// is `Launch`.
    pub fn validate(&self) -> Result<(), String> {
        let mut seen = HashSet::new();
        for d in &self.directives {
            if !seen.insert(&d.task_id) {
                return Err(format!("duplicate directive for task {}", d.task_id));
            }
            match d.action {
                CommandAction::Launch if d.payload.is_none() => {
                    return Err(format!("LAUNCH directive for {} missing payload", d.task_id));
                }
                CommandAction::Launch => d.payload.as_ref().unwrap().validate()?,
                _ if d.payload.is_some() => {
                    return Err(format!(
                        "non-LAUNCH directive for {} carries a payload",
                        d.task_id
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Outcome of one finished attempt, kept for wasted-work accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptOutcome {
    pub attempt: u32,
    pub final_progress: f64,
    pub end_state: TaskState,
}

/// Coordinator-side view of a task, as exposed by snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: TaskId,
    pub priority: Priority,
    pub state: TaskState,
    pub assigned_worker: Option<WorkerId>,
    pub progress_fraction: f64,
    pub submit_time_ms: u64,
    pub first_launch_time_ms: Option<u64>,
    pub suspend_times_ms: Vec<u64>,
    pub resume_times_ms: Vec<u64>,
    pub completion_time_ms: Option<u64>,
    pub resident_bytes: u64,
    pub swapped_bytes: u64,
    pub swapped_bytes_peak: u64,
    pub attempt_count: u32,
    /// Finished attempts, oldest first; the live attempt is not included.
    pub attempts: Vec<AttemptOutcome>,
    pub descriptor: TaskLaunchDescriptor,
}

/// Coordinator-side view of a worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerRecord {
    pub worker_id: WorkerId,
    pub address: String,
    pub slots_total: u32,
    pub slots_running: u32,
    pub slots_suspended: u32,
    pub max_suspended: u32,
    pub last_heartbeat_ms: Option<u64>,
    pub alive: bool,
}

/// Pushed to subscribers whenever the coordinator mutates task state.
/// Timestamps are coordinator-clock milliseconds, comparable with the
/// timestamps in task records and the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StateEvent {
    Transition {
        ts_ms: u64,
        task_id: TaskId,
        from: TaskState,
        event: TransitionEvent,
        to: TaskState,
    },
    Progress {
        ts_ms: u64,
        task_id: TaskId,
        progress_fraction: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PreemptPrimitive {
    Suspend,
    Kill,
}

/// Every frame exchanged over a coordinator connection. Worker traffic and
/// the control API share the framing and this vocabulary; they differ only
/// in which kinds they use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Message {
    // worker -> coordinator
    Register {
        worker_id: WorkerId,
        address: String,
        slots_total: u32,
        max_suspended: u32,
    },
    RegisterOk,
    Heartbeat(HeartbeatMessage),
    Commands(CommandMessage),

    // control client -> coordinator
    SubmitTask {
        descriptor: TaskLaunchDescriptor,
        priority: Priority,
        target_worker: Option<WorkerId>,
    },
    SubmitOk {
        task_id: TaskId,
    },
    RequestPreemption {
        task_id: TaskId,
        primitive: PreemptPrimitive,
    },
    RequestResume {
        task_id: TaskId,
    },
    RestartTask {
        task_id: TaskId,
    },
    SnapshotRequest,
    Snapshot {
        tasks: Vec<TaskRecord>,
        workers: Vec<WorkerRecord>,
    },
    Subscribe,
    Event(StateEvent),
    Shutdown,
    Ack,
    Error {
        code: String,
        message: String,
    },
}

fn fraction_valid(p: f64) -> bool {
    p.is_finite() && (0.0..=1.0).contains(&p)
}

impl Message {
    /// Structural validation applied on decode; violations surface as
    /// malformed-message errors at the codec layer.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Message::Heartbeat(hb) => {
                for r in &hb.task_reports {
                    if !fraction_valid(r.progress_fraction) {
                        return Err(format!(
                            "progress_fraction {} for {} outside [0,1]",
                            r.progress_fraction, r.task_id
                        ));
                    }
                }
                Ok(())
            }
            Message::Commands(cmd) => cmd.validate(),
            Message::SubmitTask { descriptor, .. } => descriptor.validate(),
            Message::Event(StateEvent::Progress { progress_fraction, .. }) => {
                if fraction_valid(*progress_fraction) {
                    Ok(())
                } else {
                    Err(format!("event progress {progress_fraction} outside [0,1]"))
                }
            }
            _ => Ok(()),
        }
    }
}
