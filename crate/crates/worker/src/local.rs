//! Worker-side view of a task process.

use std::path::PathBuf;

use preempt_protocol::{ObservedState, TaskId, TaskReport};

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSummary {
    pub tuples: u64,
    pub checksum_ok: bool,
}

/// Shared, mutex-guarded state for one task attempt. The supervisor thread
/// writes it; the heartbeat thread and tests read it.
#[derive(Debug, Clone)]
pub struct LocalTask {
    pub task_id: TaskId,
    pub pid: u32,
    pub attempt: u32,
    pub observed_state: ObservedState,
    pub progress_fraction: f64,
    pub resident_bytes: u64,
    pub swapped_bytes: u64,
    pub swap_supported: bool,
    pub temp_output_dir: PathBuf,
    /// PROGRESS records seen while the task was confirmed suspended.
    /// A stopped process cannot write, so this must stay zero.
    pub progress_records_while_suspended: u64,
    pub resumed_markers: u64,
    pub summary: Option<TaskSummary>,
    /// Set when a kill was requested, so an exit by SIGKILL is reported as
    /// KILLED rather than FAILED.
    pub kill_requested: bool,
}

impl LocalTask {
    pub fn report(&self) -> TaskReport {
        TaskReport {
            task_id: self.task_id.clone(),
            observed_state: self.observed_state,
            progress_fraction: self.progress_fraction,
            resident_bytes: self.resident_bytes,
            swapped_bytes: if self.swap_supported {
                self.swapped_bytes
            } else {
                0
            },
        }
    }
}

/// Commands routed from the heartbeat thread to a task's supervisor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskCommand {
    Suspend,
    Resume,
    Kill,
}
