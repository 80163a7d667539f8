//! Coordinator core: task and worker bookkeeping, heartbeat handling with
//! piggybacked command dispatch, and the control operations used by the
//! scheduler and harness.
//!
//! All task-state mutations go through [`CoordinatorState::transition`],
//! which applies the protocol state machine, maintains slot occupancy and
//! timestamps, writes the event log, and notifies subscribers. Everything
//! is driven under one mutex by the server layer, giving the single
//! logical event loop the protocol assumes.

use std::collections::{BTreeMap, VecDeque};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::mpsc::{Receiver, Sender};
use std::time::Instant;

use log::{debug, warn};
use preempt_protocol::eventlog::LogEntry;
use preempt_protocol::state::apply_transition;
use preempt_protocol::{
    AttemptOutcome, CommandAction, CommandMessage, Directive, HeartbeatMessage, IllegalTransition,
    ObservedState, PreemptPrimitive, Priority, StateEvent, TaskId, TaskLaunchDescriptor,
    TaskRecord, TaskState, TransitionEvent, WorkerId, WorkerRecord,
};
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct CoordinatorConfig {
    /// Expected worker heartbeat interval; used only for death detection.
    pub heartbeat_interval_ms: u64,
    /// A worker is declared dead after this many missed intervals.
    pub missed_heartbeats_dead: u32,
    /// Per-task memory cap used by the swap-budget admission check.
    pub per_task_memory_cap_bytes: u64,
    /// RAM + swap available to tasks on one worker machine.
    pub memory_budget_bytes: u64,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        CoordinatorConfig {
            heartbeat_interval_ms: 300,
            missed_heartbeats_dead: 10,
            per_task_memory_cap_bytes: 1 << 30,
            memory_budget_bytes: 8 << 30,
        }
    }
}

#[derive(Debug, Error)]
pub enum CoordinatorError {
    #[error("unknown worker {0}")]
    UnknownWorker(WorkerId),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error(transparent)]
    Illegal(#[from] IllegalTransition),
    #[error("swap budget exceeded on {worker}: {reason}")]
    SwapBudgetExceeded { worker: WorkerId, reason: String },
    #[error("worker lost; task {task_id} rescheduled from scratch as attempt {attempt}")]
    WorkerLost { task_id: TaskId, attempt: u32 },
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("task {task_id} not restartable from {state}")]
    NotRestartable { task_id: TaskId, state: TaskState },
    #[error("task {task_id} has no assigned worker")]
    Unassigned { task_id: TaskId },
}

impl CoordinatorError {
    /// Stable wire code for control-API error replies.
    pub fn code(&self) -> &'static str {
        match self {
            CoordinatorError::UnknownWorker(_) => "unknown_worker",
            CoordinatorError::UnknownTask(_) => "unknown_task",
            CoordinatorError::Illegal(_) => "illegal_transition",
            CoordinatorError::SwapBudgetExceeded { .. } => "swap_budget_exceeded",
            CoordinatorError::WorkerLost { .. } => "worker_lost",
            CoordinatorError::InvalidDescriptor(_) => "invalid_descriptor",
            CoordinatorError::NotRestartable { .. } => "not_restartable",
            CoordinatorError::Unassigned { .. } => "unassigned",
        }
    }
}

/// Which slot pool a task currently occupies on its worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Occupancy {
    None,
    RunningSlot,
    SuspendedSlot,
}

struct TaskEntry {
    record: TaskRecord,
    occupancy: Occupancy,
}

struct WorkerEntry {
    record: WorkerRecord,
    last_sequence_no: u64,
    /// Eagerly queued suspend/kill directives, drained onto the next
    /// heartbeat reply. Launch and resume directives are generated lazily
    /// at dispatch time because they consume a slot.
    queued: VecDeque<Directive>,
}

pub struct CoordinatorState {
    config: CoordinatorConfig,
    tasks: BTreeMap<TaskId, TaskEntry>,
    workers: BTreeMap<WorkerId, WorkerEntry>,
    next_task_seq: u64,
    start: Instant,
    log_entries: Vec<LogEntry>,
    log_file: Option<BufWriter<File>>,
    subscribers: Vec<Sender<StateEvent>>,
}

impl CoordinatorState {
    pub fn new(config: CoordinatorConfig) -> CoordinatorState {
        CoordinatorState {
            config,
            tasks: BTreeMap::new(),
            workers: BTreeMap::new(),
            next_task_seq: 0,
            start: Instant::now(),
            log_entries: Vec::new(),
            log_file: None,
            subscribers: Vec::new(),
        }
    }

    pub fn with_log_file(config: CoordinatorConfig, path: &Path) -> std::io::Result<Self> {
        let mut state = CoordinatorState::new(config);
        state.log_file = Some(BufWriter::new(File::create(path)?));
        Ok(state)
    }

    pub fn config(&self) -> &CoordinatorConfig {
        &self.config
    }

    pub fn now_ms(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }

    /// Point-in-time copy of all records.
    pub fn snapshot(&self) -> (Vec<TaskRecord>, Vec<WorkerRecord>) {
        (
            self.tasks.values().map(|t| t.record.clone()).collect(),
            self.workers.values().map(|w| w.record.clone()).collect(),
        )
    }

    /// The in-memory copy of the event log (the file mirrors it).
    pub fn log_entries(&self) -> &[LogEntry] {
        &self.log_entries
    }

    pub fn subscribe(&mut self) -> Receiver<StateEvent> {
        let (tx, rx) = std::sync::mpsc::channel();
        self.subscribers.push(tx);
        rx
    }

    fn emit(&mut self, entry: LogEntry, event: Option<StateEvent>) {
        if let Some(w) = &mut self.log_file {
            let _ = writeln!(w, "{}", entry.format_line());
            let _ = w.flush();
        }
        self.log_entries.push(entry);
        if let Some(ev) = event {
            self.subscribers
                .retain(|tx| tx.send(ev.clone()).is_ok());
        }
    }

    fn notify_progress(&mut self, task_id: &TaskId, progress: f64) {
        let ev = StateEvent::Progress {
            ts_ms: self.now_ms(),
            task_id: task_id.clone(),
            progress_fraction: progress,
        };
        self.subscribers.retain(|tx| tx.send(ev.clone()).is_ok());
    }

    // ------------------------------------------------------------------
    // Registration and liveness
    // ------------------------------------------------------------------

    pub fn register_worker(
        &mut self,
        worker_id: WorkerId,
        address: String,
        slots_total: u32,
        max_suspended: u32,
    ) {
        let now = self.now_ms();
        let entry = self
            .workers
            .entry(worker_id.clone())
            .or_insert_with(|| WorkerEntry {
                record: WorkerRecord {
                    worker_id: worker_id.clone(),
                    address: address.clone(),
                    slots_total,
                    slots_running: 0,
                    slots_suspended: 0,
                    max_suspended,
                    last_heartbeat_ms: None,
                    alive: true,
                },
                last_sequence_no: 0,
                queued: VecDeque::new(),
            });
        entry.record.address = address;
        entry.record.slots_total = slots_total;
        entry.record.max_suspended = max_suspended;
        entry.record.last_heartbeat_ms = Some(now);
        entry.record.alive = true;
        // A re-register means the worker reconnected; its sequence numbers
        // restart from 1.
        entry.last_sequence_no = 0;
    }

    fn sweep_dead_workers(&mut self) {
        let now = self.now_ms();
        let horizon =
            self.config.heartbeat_interval_ms * self.config.missed_heartbeats_dead as u64;
        for w in self.workers.values_mut() {
            if let Some(last) = w.record.last_heartbeat_ms {
                if w.record.alive && now.saturating_sub(last) > horizon {
                    warn!("worker {} declared dead", w.record.worker_id);
                    w.record.alive = false;
                }
            }
        }
    }

    // ------------------------------------------------------------------
    // The single mutation path
    // ------------------------------------------------------------------

    /// Applies one state-machine event to a task: validates it against the
    /// transition table, updates slot occupancy and timestamps, logs the
    /// transition and notifies subscribers.
    fn transition(
        &mut self,
        task_id: &TaskId,
        event: TransitionEvent,
    ) -> Result<TaskState, CoordinatorError> {
        let now = self.now_ms();
        let entry = self
            .tasks
            .get_mut(task_id)
            .ok_or_else(|| CoordinatorError::UnknownTask(task_id.clone()))?;
        let from = entry.record.state;
        let to = apply_transition(from, event)?;

        entry.record.state = to;
        match (from, to) {
            (TaskState::Pending, TaskState::Launching) => {
                // Slot reserved at dispatch time.
            }
            (TaskState::Launching, TaskState::Running) => {
                if entry.record.first_launch_time_ms.is_none() {
                    entry.record.first_launch_time_ms = Some(now);
                }
            }
            (_, TaskState::Suspended) => entry.record.suspend_times_ms.push(now),
            (TaskState::ResumingSent, TaskState::Running) => {
                entry.record.resume_times_ms.push(now)
            }
            _ => {}
        }
        if to.is_terminal() {
            entry.record.completion_time_ms = Some(now);
        }

        // Slot-occupancy bookkeeping.
        let worker_id = entry.record.assigned_worker.clone();
        let old_occ = entry.occupancy;
        let new_occ = match (old_occ, from, to) {
            (_, TaskState::Pending, TaskState::Launching) => Occupancy::RunningSlot,
            (_, _, TaskState::Suspended) => Occupancy::SuspendedSlot,
            (_, TaskState::MustResume, TaskState::ResumingSent) => Occupancy::RunningSlot,
            _ if to.is_terminal() => Occupancy::None,
            (occ, _, _) => occ,
        };
        entry.occupancy = new_occ;
        if old_occ != new_occ {
            if let Some(wid) = worker_id {
                if let Some(w) = self.workers.get_mut(&wid) {
                    match old_occ {
                        Occupancy::RunningSlot => {
                            w.record.slots_running = w.record.slots_running.saturating_sub(1)
                        }
                        Occupancy::SuspendedSlot => {
                            w.record.slots_suspended = w.record.slots_suspended.saturating_sub(1)
                        }
                        Occupancy::None => {}
                    }
                    match new_occ {
                        Occupancy::RunningSlot => w.record.slots_running += 1,
                        Occupancy::SuspendedSlot => w.record.slots_suspended += 1,
                        Occupancy::None => {}
                    }
                }
            }
        }

        self.emit(
            LogEntry::Transition {
                ts_ms: now,
                task_id: task_id.0.clone(),
                from,
                event,
                to,
            },
            Some(StateEvent::Transition {
                ts_ms: now,
                task_id: task_id.clone(),
                from,
                event,
                to,
            }),
        );
        Ok(to)
    }

    /// Record-level restart: the current attempt is archived and the task
    /// returns to PENDING as a fresh attempt. Used by kill-restart and by
    /// resume-after-worker-loss; not a state-machine transition (terminal
    /// states keep no outgoing edges).
    fn attempt_reset(&mut self, task_id: &TaskId, clear_worker: bool) -> u32 {
        let now = self.now_ms();
        let entry = self.tasks.get_mut(task_id).expect("caller checked task");
        let from = entry.record.state;
        entry.record.attempts.push(AttemptOutcome {
            attempt: entry.record.attempt_count,
            final_progress: entry.record.progress_fraction,
            end_state: from,
        });
        // Release any slot still held (a suspended task on a dead worker).
        if entry.occupancy == Occupancy::SuspendedSlot {
            if let Some(wid) = entry.record.assigned_worker.clone() {
                if let Some(w) = self.workers.get_mut(&wid) {
                    w.record.slots_suspended = w.record.slots_suspended.saturating_sub(1);
                }
            }
        }
        let entry = self.tasks.get_mut(task_id).expect("caller checked task");
        entry.occupancy = Occupancy::None;
        entry.record.attempt_count += 1;
        entry.record.progress_fraction = 0.0;
        entry.record.state = TaskState::Pending;
        entry.record.completion_time_ms = None;
        if clear_worker {
            entry.record.assigned_worker = None;
        }
        let attempt = entry.record.attempt_count;
        self.emit(
            LogEntry::AttemptReset {
                ts_ms: now,
                task_id: task_id.0.clone(),
                from,
            },
            None,
        );
        attempt
    }

    // ------------------------------------------------------------------
    // Control API
    // ------------------------------------------------------------------

    pub fn submit_task(
        &mut self,
        descriptor: TaskLaunchDescriptor,
        priority: Priority,
        target_worker: Option<WorkerId>,
    ) -> Result<TaskId, CoordinatorError> {
        self.sweep_dead_workers();
        descriptor
            .validate()
            .map_err(CoordinatorError::InvalidDescriptor)?;
        if let Some(w) = &target_worker {
            if !self.workers.contains_key(w) {
                return Err(CoordinatorError::UnknownWorker(w.clone()));
            }
        }
        self.next_task_seq += 1;
        let label = if descriptor.task_id.as_str().is_empty() {
            "task"
        } else {
            descriptor.task_id.as_str()
        };
        let task_id = TaskId(format!("t{:04}-{}", self.next_task_seq, label));
        let mut descriptor = descriptor;
        descriptor.task_id = task_id.clone();
        let record = TaskRecord {
            task_id: task_id.clone(),
            priority,
            state: TaskState::Pending,
            assigned_worker: target_worker,
            progress_fraction: 0.0,
            submit_time_ms: self.now_ms(),
            first_launch_time_ms: None,
            suspend_times_ms: Vec::new(),
            resume_times_ms: Vec::new(),
            completion_time_ms: None,
            resident_bytes: 0,
            swapped_bytes: 0,
            swapped_bytes_peak: 0,
            attempt_count: 1,
            attempts: Vec::new(),
            descriptor,
        };
        self.tasks.insert(
            task_id.clone(),
            TaskEntry {
                record,
                occupancy: Occupancy::None,
            },
        );
        Ok(task_id)
    }

    /// Marks a RUNNING task for suspension or kill; the command rides the
    /// next heartbeat reply of the assigned worker, never out of band.
    pub fn request_preemption(
        &mut self,
        task_id: &TaskId,
        primitive: PreemptPrimitive,
    ) -> Result<(), CoordinatorError> {
        self.sweep_dead_workers();
        let entry = self
            .tasks
            .get(task_id)
            .ok_or_else(|| CoordinatorError::UnknownTask(task_id.clone()))?;
        let event = match primitive {
            PreemptPrimitive::Suspend => TransitionEvent::SchedulerSuspend,
            PreemptPrimitive::Kill => TransitionEvent::SchedulerKill,
        };
        // State legality is checked before admission: preempting a task
        // that is not running is a protocol error, not a budget problem.
        apply_transition(entry.record.state, event)?;
        let worker_id = entry
            .record
            .assigned_worker
            .clone()
            .ok_or_else(|| CoordinatorError::Unassigned {
                task_id: task_id.clone(),
            })?;

        if primitive == PreemptPrimitive::Suspend {
            // Admission check before any mutation: suspension must not be
            // able to push aggregate task memory past RAM + swap.
            let w = self
                .workers
                .get(&worker_id)
                .ok_or_else(|| CoordinatorError::UnknownWorker(worker_id.clone()))?;
            let suspended_after = w.record.slots_suspended + 1;
            if suspended_after > w.record.max_suspended {
                return Err(CoordinatorError::SwapBudgetExceeded {
                    worker: worker_id.clone(),
                    reason: format!(
                        "suspended tasks {suspended_after} would exceed limit {}",
                        w.record.max_suspended
                    ),
                });
            }
            let aggregate = (w.record.slots_total as u64 + suspended_after as u64)
                * self.config.per_task_memory_cap_bytes;
            if aggregate > self.config.memory_budget_bytes {
                return Err(CoordinatorError::SwapBudgetExceeded {
                    worker: worker_id.clone(),
                    reason: format!(
                        "aggregate task memory {aggregate} would exceed budget {}",
                        self.config.memory_budget_bytes
                    ),
                });
            }
        }

        let action = match primitive {
            PreemptPrimitive::Suspend => CommandAction::Suspend,
            PreemptPrimitive::Kill => CommandAction::Kill,
        };
        self.transition(task_id, event)?;
        self.workers
            .get_mut(&worker_id)
            .expect("checked above")
            .queued
            .push_back(Directive {
                task_id: task_id.clone(),
                action,
                payload: None,
            });
        Ok(())
    }

    /// Resume is pinned to the worker the task was suspended on. If that
    /// worker is dead the task is rescheduled from scratch (a suspend that
    /// lost its machine degenerates to a delayed kill) and `WorkerLost` is
    /// returned.
    pub fn request_resume(&mut self, task_id: &TaskId) -> Result<(), CoordinatorError> {
        self.sweep_dead_workers();
        let entry = self
            .tasks
            .get(task_id)
            .ok_or_else(|| CoordinatorError::UnknownTask(task_id.clone()))?;
        if entry.record.state == TaskState::Suspended {
            let worker_alive = entry
                .record
                .assigned_worker
                .as_ref()
                .and_then(|w| self.workers.get(w))
                .map(|w| w.record.alive)
                .unwrap_or(false);
            if !worker_alive {
                let attempt = self.attempt_reset(task_id, true);
                return Err(CoordinatorError::WorkerLost {
                    task_id: task_id.clone(),
                    attempt,
                });
            }
        }
        self.transition(task_id, TransitionEvent::SchedulerResume)?;
        Ok(())
    }

    /// Restart after kill or failure: fresh attempt from scratch.
    pub fn restart_task(&mut self, task_id: &TaskId) -> Result<u32, CoordinatorError> {
        self.sweep_dead_workers();
        let entry = self
            .tasks
            .get(task_id)
            .ok_or_else(|| CoordinatorError::UnknownTask(task_id.clone()))?;
        match entry.record.state {
            TaskState::Killed | TaskState::Failed => Ok(self.attempt_reset(task_id, false)),
            state => Err(CoordinatorError::NotRestartable {
                task_id: task_id.clone(),
                state,
            }),
        }
    }

    // ------------------------------------------------------------------
    // Heartbeats
    // ------------------------------------------------------------------

    pub fn handle_heartbeat(
        &mut self,
        hb: &HeartbeatMessage,
    ) -> Result<CommandMessage, CoordinatorError> {
        self.sweep_dead_workers();
        let now = self.now_ms();
        {
            let w = self
                .workers
                .get_mut(&hb.worker_id)
                .ok_or_else(|| CoordinatorError::UnknownWorker(hb.worker_id.clone()))?;
            if hb.sequence_no <= w.last_sequence_no {
                // Replay after retransmission: drop silently, reply empty.
                debug!(
                    "stale heartbeat {} <= {} from {}",
                    hb.sequence_no, w.last_sequence_no, hb.worker_id
                );
                return Ok(CommandMessage::empty());
            }
            w.last_sequence_no = hb.sequence_no;
            w.record.last_heartbeat_ms = Some(now);
            w.record.alive = true;
        }

        // Worker-side slot consistency: reported running + free == total.
        let reported_running = hb
            .task_reports
            .iter()
            .filter(|r| r.observed_state == ObservedState::Running)
            .count() as u32;
        let slots_total = self.workers[&hb.worker_id].record.slots_total;
        if reported_running + hb.free_slots != slots_total {
            warn!(
                "worker {} slot mismatch: {reported_running} running + {} free != {slots_total}",
                hb.worker_id, hb.free_slots
            );
            self.emit(
                LogEntry::Note {
                    ts_ms: now,
                    task_id: hb.worker_id.0.clone(),
                    text: format!(
                        "slot_mismatch running={reported_running} free={} total={slots_total}",
                        hb.free_slots
                    ),
                },
                None,
            );
        }

        // Apply task reports: progress, memory statistics, then the derived
        // state-machine event.
        for report in &hb.task_reports {
            let Some(entry) = self.tasks.get_mut(&report.task_id) else {
                debug!("report for unknown task {}", report.task_id);
                continue;
            };
            let state = entry.record.state;
            let active = !state.is_terminal() && state != TaskState::Pending;
            if active {
                entry.record.resident_bytes = report.resident_bytes;
                entry.record.swapped_bytes = report.swapped_bytes;
                if report.progress_fraction > entry.record.progress_fraction {
                    entry.record.progress_fraction = report.progress_fraction;
                    let (id, p) = (report.task_id.clone(), report.progress_fraction);
                    self.notify_progress(&id, p);
                }
            }
            let entry = self.tasks.get_mut(&report.task_id).expect("just looked up");
            entry.record.swapped_bytes_peak =
                entry.record.swapped_bytes_peak.max(report.swapped_bytes);

            let state = entry.record.state;
            match derive_report_event(state, report.observed_state) {
                ReportOutcome::Event(event) => {
                    self.transition(&report.task_id, event)?;
                    // A confirmed kill completes cleanup bookkeeping
                    // synchronously: the worker already removed the task's
                    // temporary outputs before reporting KILLED.
                    if event == TransitionEvent::WorkerConfirmedKilled {
                        self.transition(&report.task_id, TransitionEvent::CleanupDone)?;
                    }
                }
                ReportOutcome::Ignore => {}
                ReportOutcome::Anomaly => {
                    warn!(
                        "anomalous report for {}: {} while {state}",
                        report.task_id,
                        observed_name(report.observed_state),
                    );
                    self.emit(
                        LogEntry::Note {
                            ts_ms: now,
                            task_id: report.task_id.0.clone(),
                            text: format!(
                                "anomalous_report observed={} state={state}",
                                observed_name(report.observed_state)
                            ),
                        },
                        None,
                    );
                }
            }
        }

        Ok(self.dispatch(&hb.worker_id))
    }

    /// Builds the piggybacked reply for one worker: queued suspend/kill
    /// directives first (they release resources), then slot-gated resumes
    /// and launches. Each directive is emitted exactly once.
    fn dispatch(&mut self, worker_id: &WorkerId) -> CommandMessage {
        let mut directives = Vec::new();

        // Queued suspend/kill commands; drop those their task outran.
        let queued: Vec<Directive> = {
            let w = self.workers.get_mut(worker_id).expect("caller checked");
            w.queued.drain(..).collect()
        };
        for d in queued {
            let state = match self.tasks.get(&d.task_id) {
                Some(t) => t.record.state,
                None => continue,
            };
            if state.is_terminal() {
                // Completion raced the command and won; nothing to send.
                let now = self.now_ms();
                self.emit(
                    LogEntry::Note {
                        ts_ms: now,
                        task_id: d.task_id.0.clone(),
                        text: format!("directive_dropped action={:?} state={state}", d.action),
                    },
                    None,
                );
                continue;
            }
            if self.transition(&d.task_id, TransitionEvent::CommandSent).is_ok() {
                directives.push(d);
            }
        }

        let free = |state: &CoordinatorState| {
            let w = &state.workers[worker_id].record;
            w.slots_total.saturating_sub(w.slots_running)
        };

        // Resumes before launches: a resumed task continues paid-for work.
        let resumable: Vec<TaskId> = self
            .tasks
            .iter()
            .filter(|(_, t)| {
                t.record.state == TaskState::MustResume
                    && t.record.assigned_worker.as_ref() == Some(worker_id)
            })
            .map(|(id, _)| id.clone())
            .collect();
        for task_id in resumable {
            if free(self) == 0 {
                break;
            }
            if self.transition(&task_id, TransitionEvent::CommandSent).is_ok() {
                directives.push(Directive {
                    task_id,
                    action: CommandAction::Resume,
                    payload: None,
                });
            }
        }

        // Pending launches: high priority first, then submission order
        // (task ids embed the submission sequence).
        let mut pending: Vec<(Priority, TaskId)> = self
            .tasks
            .iter()
            .filter(|(_, t)| {
                t.record.state == TaskState::Pending
                    && (t.record.assigned_worker.is_none()
                        || t.record.assigned_worker.as_ref() == Some(worker_id))
            })
            .map(|(id, t)| (t.record.priority, id.clone()))
            .collect();
        pending.sort_by_key(|(prio, id)| (*prio != Priority::High, id.clone()));
        for (_, task_id) in pending {
            if free(self) == 0 {
                break;
            }
            let alive = self.workers[worker_id].record.alive;
            if !alive {
                break;
            }
            {
                let entry = self.tasks.get_mut(&task_id).expect("listed above");
                entry.record.assigned_worker = Some(worker_id.clone());
            }
            if self.transition(&task_id, TransitionEvent::Launch).is_ok() {
                let payload = self.tasks[&task_id].record.descriptor.clone();
                directives.push(Directive {
                    task_id,
                    action: CommandAction::Launch,
                    payload: Some(payload),
                });
            }
        }

        let msg = CommandMessage { directives };
        debug_assert!(msg.validate().is_ok(), "invalid reply: {msg:?}");
        msg
    }

    /// Internal consistency checks used by tests and fuzzing.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (id, t) in &self.tasks {
            let r = &t.record;
            if r.completion_time_ms.is_some() != r.state.is_terminal() {
                return Err(format!(
                    "{id}: completion_time set={} but state {}",
                    r.completion_time_ms.is_some(),
                    r.state
                ));
            }
            let s = r.suspend_times_ms.len();
            let c = r.resume_times_ms.len();
            if !(s == c || s == c + 1) {
                return Err(format!("{id}: suspend/resume interleave broken: {s} vs {c}"));
            }
            if !(0.0..=1.0).contains(&r.progress_fraction) {
                return Err(format!("{id}: progress {} out of range", r.progress_fraction));
            }
        }
        for (wid, w) in &self.workers {
            let running = self
                .tasks
                .values()
                .filter(|t| {
                    t.occupancy == Occupancy::RunningSlot
                        && t.record.assigned_worker.as_ref() == Some(wid)
                })
                .count() as u32;
            let suspended = self
                .tasks
                .values()
                .filter(|t| {
                    t.occupancy == Occupancy::SuspendedSlot
                        && t.record.assigned_worker.as_ref() == Some(wid)
                })
                .count() as u32;
            if running != w.record.slots_running || suspended != w.record.slots_suspended {
                return Err(format!(
                    "{wid}: occupancy mismatch: derived {running}/{suspended} vs record {}/{}",
                    w.record.slots_running, w.record.slots_suspended
                ));
            }
            if w.record.slots_running > w.record.slots_total {
                return Err(format!("{wid}: running above total"));
            }
            if w.record.slots_suspended > w.record.max_suspended {
                return Err(format!("{wid}: suspended above limit"));
            }
        }
        Ok(())
    }
}

fn observed_name(o: ObservedState) -> &'static str {
    match o {
        ObservedState::Running => "RUNNING",
        ObservedState::Suspended => "SUSPENDED",
        ObservedState::Succeeded => "SUCCEEDED",
        ObservedState::Failed => "FAILED",
        ObservedState::Killed => "KILLED",
    }
}

enum ReportOutcome {
    Event(TransitionEvent),
    Ignore,
    Anomaly,
}

/// Maps a worker observation onto a state-machine event given the record's
/// current state. Duplicate observations map to `Ignore`, which is what
/// makes heartbeat processing idempotent under replays; observations that
/// contradict the record (a suspended process reporting success, for
/// example) are anomalies that must not corrupt state.
fn derive_report_event(state: TaskState, observed: ObservedState) -> ReportOutcome {
    use ObservedState as O;
    use ReportOutcome::*;
    use TaskState as S;

    match (state, observed) {
        (S::Launching, O::Running) => Event(TransitionEvent::Launched),
        (S::Launching, O::Succeeded) => Event(TransitionEvent::WorkerReportedSuccess),
        (S::Launching, O::Failed) => Event(TransitionEvent::WorkerReportedFailure),

        (S::Running, O::Running) => Ignore,
        (S::Running, O::Succeeded) => Event(TransitionEvent::WorkerReportedSuccess),
        (S::Running, O::Failed) => Event(TransitionEvent::WorkerReportedFailure),

        (S::MustSuspend, O::Running) => Ignore, // command not sent yet
        (S::MustSuspend, O::Succeeded) => Event(TransitionEvent::WorkerReportedSuccess),
        (S::MustSuspend, O::Failed) => Event(TransitionEvent::WorkerReportedFailure),

        (S::SuspendingSent, O::Running) => Ignore, // command still in flight
        (S::SuspendingSent, O::Suspended) => Event(TransitionEvent::WorkerConfirmedSuspended),
        (S::SuspendingSent, O::Succeeded) => Event(TransitionEvent::WorkerReportedSuccess),
        (S::SuspendingSent, O::Failed) => Event(TransitionEvent::WorkerReportedFailure),

        (S::Suspended, O::Suspended) => Ignore,
        (S::Suspended, O::Failed) => Event(TransitionEvent::WorkerReportedFailure),

        (S::MustResume, O::Suspended) => Ignore, // resume not dispatched yet
        (S::MustResume, O::Failed) => Event(TransitionEvent::WorkerReportedFailure),

        (S::ResumingSent, O::Suspended) => Ignore, // command still in flight
        (S::ResumingSent, O::Running) => Event(TransitionEvent::WorkerConfirmedRunning),
        (S::ResumingSent, O::Succeeded) => Event(TransitionEvent::WorkerReportedSuccess),
        (S::ResumingSent, O::Failed) => Event(TransitionEvent::WorkerReportedFailure),

        (S::MustKill, O::Running) | (S::MustKill, O::Suspended) => Ignore,
        (S::MustKill, O::Killed) => Event(TransitionEvent::WorkerConfirmedKilled),
        (S::MustKill, O::Succeeded) => Event(TransitionEvent::WorkerReportedSuccess),
        (S::MustKill, O::Failed) => Event(TransitionEvent::WorkerReportedFailure),

        // Terminal records ignore matching echoes and flag contradictions.
        (S::Succeeded, O::Succeeded)
        | (S::Failed, O::Failed)
        | (S::Killed, O::Killed) => Ignore,

        // Stale echoes of a finished attempt while the next one is pending.
        (S::Pending, _) => Ignore,

        _ => Anomaly,
    }
}
