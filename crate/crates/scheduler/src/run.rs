//! The scripted two-task schedule: submit t_l, trigger on its completion
//! rate, preempt with the configured primitive, launch t_h, and recover
//! t_l afterwards.

use std::time::{Duration, Instant};

use log::{info, warn};
use preempt_protocol::{
    PreemptPrimitive, Priority, StateEvent, TaskId, TaskRecord, TaskState,
};
use thiserror::Error;

use crate::client::{ClientError, ControlClient, EventStream};
use crate::trigger::{AfterHigh, PreemptAction, ScenarioSpec};

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("trigger never fired: t_l reached {final_state} at progress {final_progress:.4}, threshold {threshold}")]
    TriggerNeverFired {
        final_state: TaskState,
        final_progress: f64,
        threshold: f64,
    },
    #[error("schedule timed out while {0}")]
    Timeout(String),
    #[error("task {task_id} ended {state} while waiting for {wanted}")]
    UnexpectedTerminal {
        task_id: TaskId,
        state: TaskState,
        wanted: String,
    },
}

/// Everything the harness needs to compute metrics for one run. All
/// timestamps are coordinator-clock milliseconds.
#[derive(Debug, Clone)]
pub struct ScheduleOutcome {
    pub task_low: TaskId,
    pub task_high: TaskId,
    /// Arrival instant of t_h: the moment the trigger fired.
    pub trigger_instant_ms: u64,
    /// t_l progress observed at the trigger.
    pub trigger_progress: f64,
    pub low_record: TaskRecord,
    pub high_record: TaskRecord,
    /// The resume path found the worker dead and fell back to a restart.
    pub resumed_after_worker_loss: bool,
}

struct EventWatcher {
    stream: EventStream,
    deadline: Instant,
}

impl EventWatcher {
    fn next(&mut self, waiting_for: &str) -> Result<StateEvent, ScheduleError> {
        loop {
            let left = self
                .deadline
                .checked_duration_since(Instant::now())
                .ok_or_else(|| ScheduleError::Timeout(waiting_for.to_string()))?;
            let chunk = left.min(Duration::from_millis(250)).max(Duration::from_millis(1));
            if let Some(ev) = self.stream.next_event(chunk)? {
                return Ok(ev);
            }
        }
    }

    /// Waits until `task` reaches `target`. Errors on other terminal states.
    fn wait_for_state(
        &mut self,
        task: &TaskId,
        target: TaskState,
        waiting_for: &str,
    ) -> Result<u64, ScheduleError> {
        loop {
            match self.next(waiting_for)? {
                StateEvent::Transition {
                    ts_ms,
                    task_id,
                    to,
                    ..
                } if &task_id == task => {
                    if to == target {
                        return Ok(ts_ms);
                    }
                    if to.is_terminal() {
                        return Err(ScheduleError::UnexpectedTerminal {
                            task_id,
                            state: to,
                            wanted: waiting_for.to_string(),
                        });
                    }
                }
                _ => {}
            }
        }
    }
}

/// Runs the scripted scenario against a live coordinator and returns the
/// timestamps the metrics need.
pub fn run_schedule(addr: &str, spec: &ScenarioSpec) -> Result<ScheduleOutcome, ScheduleError> {
    spec.trigger
        .validate()
        .map_err(ScheduleError::InvalidScenario)?;

    let mut ctl = ControlClient::connect(addr)?;
    let stream = EventStream::connect(addr)?;
    let mut watcher = EventWatcher {
        stream,
        deadline: Instant::now() + Duration::from_millis(spec.timeout_ms),
    };

    // Pre-flight: one alive worker with at least one slot.
    let (_, workers) = ctl.snapshot()?;
    if !workers.iter().any(|w| w.alive && w.slots_total >= 1) {
        return Err(ScheduleError::Precondition(
            "no alive worker with a slot".into(),
        ));
    }

    let r = spec.trigger.threshold_r;
    let task_low = ctl.submit(spec.low.clone(), Priority::Low, None)?;
    info!("submitted {task_low} (low), waiting for completion rate {r}");

    // Watch t_l's progress until it crosses the threshold. The crossing
    // event's coordinator timestamp is t_h's arrival instant.
    let (trigger_instant_ms, trigger_progress) = loop {
        match watcher.next("trigger crossing")? {
            StateEvent::Progress {
                ts_ms,
                task_id,
                progress_fraction,
            } if task_id == task_low && progress_fraction >= r => {
                break (ts_ms, progress_fraction);
            }
            StateEvent::Transition { task_id, to, .. }
                if task_id == task_low && to.is_terminal() =>
            {
                let (tasks, _) = ctl.snapshot()?;
                let progress = tasks
                    .iter()
                    .find(|t| t.task_id == task_low)
                    .map(|t| t.progress_fraction)
                    .unwrap_or(0.0);
                return Err(ScheduleError::TriggerNeverFired {
                    final_state: to,
                    final_progress: progress,
                    threshold: r,
                });
            }
            _ => {}
        }
    };
    info!("trigger fired at progress {trigger_progress:.4} (t={trigger_instant_ms}ms)");

    let mut resumed_after_worker_loss = false;
    let task_high = match spec.trigger.action {
        PreemptAction::Wait => {
            // t_h arrives now but waits for the slot; no preemption command
            // is ever issued.
            let high = ctl.submit(spec.high.clone(), Priority::High, None)?;
            watcher.wait_for_state(&high, TaskState::Succeeded, "t_h completion under wait")?;
            high
        }
        PreemptAction::SuspendResume => {
            ctl.request_preemption(&task_low, PreemptPrimitive::Suspend)?;
            watcher.wait_for_state(&task_low, TaskState::Suspended, "t_l suspension")?;
            let high = ctl.submit(spec.high.clone(), Priority::High, None)?;
            watcher.wait_for_state(&high, TaskState::Succeeded, "t_h completion")?;
            match ctl.request_resume(&task_low) {
                Ok(()) => {}
                Err(e) if e.code() == Some("worker_lost") => {
                    // Resume locality lost its machine: the task restarts
                    // from scratch, a suspend degenerated to a delayed kill.
                    warn!("{task_low}: worker lost, rescheduled from scratch");
                    resumed_after_worker_loss = true;
                }
                Err(e) => return Err(e.into()),
            }
            watcher.wait_for_state(&task_low, TaskState::Succeeded, "t_l completion after resume")?;
            high
        }
        PreemptAction::KillRestart => {
            ctl.request_preemption(&task_low, PreemptPrimitive::Kill)?;
            watcher.wait_for_state(&task_low, TaskState::Killed, "t_l kill confirmation")?;
            let high = ctl.submit(spec.high.clone(), Priority::High, None)?;
            watcher.wait_for_state(&high, TaskState::Succeeded, "t_h completion")?;
            match spec.trigger.after_high_completes {
                AfterHigh::RestartLow => {
                    ctl.restart_task(&task_low)?;
                    watcher.wait_for_state(
                        &task_low,
                        TaskState::Succeeded,
                        "t_l completion after restart",
                    )?;
                }
                _ => unreachable!("validated pairing"),
            }
            high
        }
    };

    let (tasks, _) = ctl.snapshot()?;
    let find = |id: &TaskId| tasks.iter().find(|t| &t.task_id == id).cloned();
    let low_record = find(&task_low).ok_or_else(|| {
        ScheduleError::Precondition(format!("{task_low} missing from final snapshot"))
    })?;
    let high_record = find(&task_high).ok_or_else(|| {
        ScheduleError::Precondition(format!("{task_high} missing from final snapshot"))
    })?;

    Ok(ScheduleOutcome {
        task_low,
        task_high,
        trigger_instant_ms,
        trigger_progress,
        low_record,
        high_record,
        resumed_after_worker_loss,
    })
}
