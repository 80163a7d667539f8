//! Task lifecycle state machine.
//!
//! The coordinator never mutates a task's state directly: every change goes
//! through [`apply_transition`], which either returns the successor state or
//! rejects the `(state, event)` pair as [`IllegalTransition`]. Intent states
//! (`MustSuspend`, `MustResume`, `MustKill`) record a scheduler decision that
//! has not yet been sent to the worker; `SuspendingSent`/`ResumingSent` mark a
//! command in flight; `Suspended`, `Running` and the terminal states are
//! worker-confirmed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coordinator-side view of a task's lifecycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskState {
    Pending,
    Launching,
    Running,
    MustSuspend,
    SuspendingSent,
    Suspended,
    MustResume,
    ResumingSent,
    MustKill,
    Killed,
    Cleanup,
    Succeeded,
    Failed,
}

impl TaskState {
    pub const ALL: [TaskState; 13] = [
        TaskState::Pending,
        TaskState::Launching,
        TaskState::Running,
        TaskState::MustSuspend,
        TaskState::SuspendingSent,
        TaskState::Suspended,
        TaskState::MustResume,
        TaskState::ResumingSent,
        TaskState::MustKill,
        TaskState::Killed,
        TaskState::Cleanup,
        TaskState::Succeeded,
        TaskState::Failed,
    ];

    /// Terminal states have no outgoing transitions.
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            TaskState::Succeeded | TaskState::Killed | TaskState::Failed
        )
    }

    /// Wire name, e.g. `MUST_SUSPEND`.
    pub fn as_str(self) -> &'static str {
        match self {
            TaskState::Pending => "PENDING",
            TaskState::Launching => "LAUNCHING",
            TaskState::Running => "RUNNING",
            TaskState::MustSuspend => "MUST_SUSPEND",
            TaskState::SuspendingSent => "SUSPENDING_SENT",
            TaskState::Suspended => "SUSPENDED",
            TaskState::MustResume => "MUST_RESUME",
            TaskState::ResumingSent => "RESUMING_SENT",
            TaskState::MustKill => "MUST_KILL",
            TaskState::Killed => "KILLED",
            TaskState::Cleanup => "CLEANUP",
            TaskState::Succeeded => "SUCCEEDED",
            TaskState::Failed => "FAILED",
        }
    }

    pub fn parse(s: &str) -> Option<TaskState> {
        TaskState::ALL.iter().copied().find(|st| st.as_str() == s)
    }
}

impl std::fmt::Display for TaskState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Events that drive the task state machine.
///
/// `Launch` and `CommandSent` fire when a directive is placed on a heartbeat
/// reply; the `Worker*` events fire when a heartbeat report confirms an
/// observation; the `Scheduler*` events record preemption intent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionEvent {
    Launch,
    Launched,
    SchedulerSuspend,
    SchedulerResume,
    SchedulerKill,
    CommandSent,
    WorkerConfirmedSuspended,
    WorkerConfirmedRunning,
    WorkerReportedSuccess,
    WorkerReportedFailure,
    WorkerConfirmedKilled,
    CleanupDone,
}

impl TransitionEvent {
    pub const ALL: [TransitionEvent; 12] = [
        TransitionEvent::Launch,
        TransitionEvent::Launched,
        TransitionEvent::SchedulerSuspend,
        TransitionEvent::SchedulerResume,
        TransitionEvent::SchedulerKill,
        TransitionEvent::CommandSent,
        TransitionEvent::WorkerConfirmedSuspended,
        TransitionEvent::WorkerConfirmedRunning,
        TransitionEvent::WorkerReportedSuccess,
        TransitionEvent::WorkerReportedFailure,
        TransitionEvent::WorkerConfirmedKilled,
        TransitionEvent::CleanupDone,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransitionEvent::Launch => "launch",
            TransitionEvent::Launched => "launched",
            TransitionEvent::SchedulerSuspend => "scheduler_suspend",
            TransitionEvent::SchedulerResume => "scheduler_resume",
            TransitionEvent::SchedulerKill => "scheduler_kill",
            TransitionEvent::CommandSent => "command_sent",
            TransitionEvent::WorkerConfirmedSuspended => "worker_confirmed_suspended",
            TransitionEvent::WorkerConfirmedRunning => "worker_confirmed_running",
            TransitionEvent::WorkerReportedSuccess => "worker_reported_success",
            TransitionEvent::WorkerReportedFailure => "worker_reported_failure",
            TransitionEvent::WorkerConfirmedKilled => "worker_confirmed_killed",
            TransitionEvent::CleanupDone => "cleanup_done",
        }
    }

    pub fn parse(s: &str) -> Option<TransitionEvent> {
        TransitionEvent::ALL.iter().copied().find(|e| e.as_str() == s)
    }
}

impl std::fmt::Display for TransitionEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A `(state, event)` pair outside the transition table. Signals a protocol
/// bug or a duplicated/stale message; the caller must not mutate state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("illegal transition: {from} + {event}")]
pub struct IllegalTransition {
    pub from: TaskState,
    pub event: TransitionEvent,
}

/// Returns the successor state for `(current, event)`, or
/// [`IllegalTransition`] if the pair is not in the table.
///
/// A completion report can overtake a suspend or kill command at several
/// points (the task finished "in the meanwhile"), so `WorkerReportedSuccess`
/// is accepted from every state where the process could still have been
/// running; it is rejected from `Suspended` and `MustResume`, where the
/// process is stopped and cannot complete. `CommandSent` on `MustKill` is a
/// self-loop: there is no dedicated "kill sent" state, the record waits in
/// `MustKill` until the worker confirms.
pub fn apply_transition(
    current: TaskState,
    event: TransitionEvent,
) -> Result<TaskState, IllegalTransition> {
    use TaskState as S;
    use TransitionEvent as E;

    let next = match (current, event) {
        (S::Pending, E::Launch) => S::Launching,

        (S::Launching, E::Launched) => S::Running,
        (S::Launching, E::WorkerReportedSuccess) => S::Succeeded,
        (S::Launching, E::WorkerReportedFailure) => S::Failed,

        (S::Running, E::SchedulerSuspend) => S::MustSuspend,
        (S::Running, E::SchedulerKill) => S::MustKill,
        (S::Running, E::WorkerReportedSuccess) => S::Succeeded,
        (S::Running, E::WorkerReportedFailure) => S::Failed,

        (S::MustSuspend, E::CommandSent) => S::SuspendingSent,
        (S::MustSuspend, E::WorkerReportedSuccess) => S::Succeeded,
        (S::MustSuspend, E::WorkerReportedFailure) => S::Failed,

        (S::SuspendingSent, E::WorkerConfirmedSuspended) => S::Suspended,
        (S::SuspendingSent, E::WorkerReportedSuccess) => S::Succeeded,
        (S::SuspendingSent, E::WorkerReportedFailure) => S::Failed,

        (S::Suspended, E::SchedulerResume) => S::MustResume,
        (S::Suspended, E::SchedulerKill) => S::MustKill,
        (S::Suspended, E::WorkerReportedFailure) => S::Failed,

        (S::MustResume, E::CommandSent) => S::ResumingSent,
        (S::MustResume, E::WorkerReportedFailure) => S::Failed,

        (S::ResumingSent, E::WorkerConfirmedRunning) => S::Running,
        (S::ResumingSent, E::WorkerReportedSuccess) => S::Succeeded,
        (S::ResumingSent, E::WorkerReportedFailure) => S::Failed,

        (S::MustKill, E::CommandSent) => S::MustKill,
        (S::MustKill, E::WorkerConfirmedKilled) => S::Cleanup,
        (S::MustKill, E::WorkerReportedSuccess) => S::Succeeded,
        (S::MustKill, E::WorkerReportedFailure) => S::Failed,

        (S::Cleanup, E::CleanupDone) => S::Killed,

        _ => return Err(IllegalTransition { from: current, event }),
    };
    Ok(next)
}
