//! Task eviction policies: which running task a scheduler should preempt
//! when a high-priority job arrives.

use preempt_protocol::{TaskId, TaskRecord, TaskState};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvictionPolicy {
    /// The configuration names the victim.
    Explicit,
    /// Suspend tasks that are closest to completion (keeps a job's tasks
    /// finishing close together, helping sojourn times).
    ClosestToCompletion,
    /// Suspend tasks with the smallest memory footprint (minimizes paging
    /// overhead, helping makespan).
    SmallestFootprint,
}

#[derive(Debug, Error, PartialEq)]
pub enum EvictionError {
    #[error("no eviction candidates")]
    EmptyCandidates,
    #[error("candidate {0} is not running")]
    NotRunning(TaskId),
    #[error("EXPLICIT policy takes the victim from configuration")]
    ExplicitNeedsName,
}

/// Picks the victim deterministically; ties break toward the
/// lexicographically smallest task id.
pub fn select_victim(
    policy: EvictionPolicy,
    candidates: &[TaskRecord],
) -> Result<TaskId, EvictionError> {
    if candidates.is_empty() {
        return Err(EvictionError::EmptyCandidates);
    }
    for c in candidates {
        if c.state != TaskState::Running {
            return Err(EvictionError::NotRunning(c.task_id.clone()));
        }
    }
    let winner = match policy {
        EvictionPolicy::Explicit => return Err(EvictionError::ExplicitNeedsName),
        EvictionPolicy::ClosestToCompletion => candidates
            .iter()
            .max_by(|a, b| {
                a.progress_fraction
                    .partial_cmp(&b.progress_fraction)
                    .unwrap()
                    // On equal progress prefer the smaller id: invert the
                    // id ordering because max_by keeps the "greater" side.
                    .then_with(|| b.task_id.cmp(&a.task_id))
            })
            .unwrap(),
        EvictionPolicy::SmallestFootprint => candidates
            .iter()
            .min_by(|a, b| {
                let fa = a.resident_bytes + a.swapped_bytes;
                let fb = b.resident_bytes + b.swapped_bytes;
                fa.cmp(&fb).then_with(|| a.task_id.cmp(&b.task_id))
            })
            .unwrap(),
    };
    Ok(winner.task_id.clone())
}
