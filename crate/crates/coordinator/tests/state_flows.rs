//! Coordinator state-machine flows driven by synthetic heartbeats
//! (no sockets, no processes).

use preempt_coordinator::{CoordinatorConfig, CoordinatorError, CoordinatorState};
use preempt_protocol::eventlog::validate_trace;
use preempt_protocol::{
    CommandAction, HeartbeatMessage, ObservedState, PreemptPrimitive, Priority, TaskId,
    TaskLaunchDescriptor, TaskReport, TaskState, WorkerId,
};

fn descriptor(label: &str) -> TaskLaunchDescriptor {
    TaskLaunchDescriptor {
        task_id: label.into(),
        executable: "/bin/true".into(),
        args: vec![],
        input_path: "/dev/null".into(),
        input_bytes: 64 << 20,
        ballast_bytes: 0,
        progress_interval_tuples: 32,
    }
}

/// Synthetic worker: builds sequenced heartbeats.
struct SimWorker {
    id: WorkerId,
    seq: u64,
    slots_total: u32,
}

impl SimWorker {
    fn register(state: &mut CoordinatorState, name: &str, slots: u32, max_susp: u32) -> SimWorker {
        state.register_worker(name.into(), format!("sim://{name}"), slots, max_susp);
        SimWorker {
            id: name.into(),
            seq: 0,
            slots_total: slots,
        }
    }

    fn beat(
        &mut self,
        state: &mut CoordinatorState,
        reports: Vec<TaskReport>,
    ) -> preempt_protocol::CommandMessage {
        self.seq += 1;
        let running = reports
            .iter()
            .filter(|r| r.observed_state == ObservedState::Running)
            .count() as u32;
        let hb = HeartbeatMessage {
            worker_id: self.id.clone(),
            sequence_no: self.seq,
            task_reports: reports,
            free_slots: self.slots_total - running,
            timestamp_ms: self.seq * 100,
        };
        let reply = state.handle_heartbeat(&hb).unwrap();
        state.check_invariants().unwrap();
        reply
    }
}

fn report(task: &TaskId, observed: ObservedState, progress: f64) -> TaskReport {
    TaskReport {
        task_id: task.clone(),
        observed_state: observed,
        progress_fraction: progress,
        resident_bytes: 1 << 20,
        swapped_bytes: 0,
    }
}

fn task_state(state: &CoordinatorState, id: &TaskId) -> TaskState {
    state
        .snapshot()
        .0
        .iter()
        .find(|t| &t.task_id == id)
        .unwrap()
        .state
}

#[test]
fn submit_creates_pending_record_with_unique_ids() {
    let mut st = CoordinatorState::new(CoordinatorConfig::default());
    let _w = SimWorker::register(&mut st, "w1", 1, 1);

    let a = st.submit_task(descriptor("tl"), Priority::Low, None).unwrap();
    let b = st.submit_task(descriptor("tl"), Priority::Low, None).unwrap();
    assert_ne!(a, b);

    let (tasks, _) = st.snapshot();
    assert_eq!(tasks.len(), 2);
    assert!(tasks.iter().all(|t| t.state == TaskState::Pending));
    assert!(tasks.iter().all(|t| t.attempt_count == 1));
    assert_eq!(tasks[0].descriptor.input_bytes, 64 << 20);
}

#[test]
fn submit_to_unregistered_worker_is_rejected() {
    let mut st = CoordinatorState::new(CoordinatorConfig::default());
    let err = st
        .submit_task(descriptor("tl"), Priority::Low, Some("ghost".into()))
        .unwrap_err();
    assert!(matches!(err, CoordinatorError::UnknownWorker(_)));
}

#[test]
fn empty_snapshot() {
    let st = CoordinatorState::new(CoordinatorConfig::default());
    let (tasks, workers) = st.snapshot();
    assert!(tasks.is_empty());
    assert!(workers.is_empty());
}

#[test]
fn launch_rides_heartbeat_and_confirmation_sets_running() {
    let mut st = CoordinatorState::new(CoordinatorConfig::default());
    let mut w = SimWorker::register(&mut st, "w1", 1, 1);
    let id = st.submit_task(descriptor("tl"), Priority::Low, None).unwrap();

    let reply = w.beat(&mut st, vec![]);
    assert_eq!(reply.directives.len(), 1);
    assert_eq!(reply.directives[0].action, CommandAction::Launch);
    assert_eq!(reply.directives[0].task_id, id);
    assert!(reply.directives[0].payload.is_some());
    assert_eq!(task_state(&st, &id), TaskState::Launching);

    // Exactly once: the next beat must not repeat the launch.
    let reply2 = w.beat(&mut st, vec![report(&id, ObservedState::Running, 0.0)]);
    assert!(reply2.directives.is_empty());
    assert_eq!(task_state(&st, &id), TaskState::Running);
    let rec = &st.snapshot().0[0];
    assert!(rec.first_launch_time_ms.is_some());
}

#[test]
fn suspend_round_trip_with_intermediate_states_visible() {
    let mut st = CoordinatorState::new(CoordinatorConfig::default());
    let mut w = SimWorker::register(&mut st, "w1", 1, 1);
    let id = st.submit_task(descriptor("tl"), Priority::Low, None).unwrap();
    w.beat(&mut st, vec![]);
    w.beat(&mut st, vec![report(&id, ObservedState::Running, 0.1)]);

    st.request_preemption(&id, PreemptPrimitive::Suspend).unwrap();
    assert_eq!(task_state(&st, &id), TaskState::MustSuspend);

    // The suspend command is piggybacked on the next heartbeat reply.
    let reply = w.beat(&mut st, vec![report(&id, ObservedState::Running, 0.2)]);
    assert_eq!(reply.directives.len(), 1);
    assert_eq!(reply.directives[0].action, CommandAction::Suspend);
    // Intent recorded vs command in flight are distinguishable states.
    assert_eq!(task_state(&st, &id), TaskState::SuspendingSent);

    w.beat(&mut st, vec![report(&id, ObservedState::Suspended, 0.2)]);
    assert_eq!(task_state(&st, &id), TaskState::Suspended);
    let rec = st.snapshot().0.into_iter().find(|t| t.task_id == id).unwrap();
    assert_eq!(rec.suspend_times_ms.len(), 1);

    // Resume: dispatched lazily on the next beat, pinned to the worker.
    st.request_resume(&id).unwrap();
    assert_eq!(task_state(&st, &id), TaskState::MustResume);
    let reply = w.beat(&mut st, vec![report(&id, ObservedState::Suspended, 0.2)]);
    assert_eq!(reply.directives.len(), 1);
    assert_eq!(reply.directives[0].action, CommandAction::Resume);
    assert_eq!(task_state(&st, &id), TaskState::ResumingSent);

    w.beat(&mut st, vec![report(&id, ObservedState::Running, 0.3)]);
    assert_eq!(task_state(&st, &id), TaskState::Running);
    let rec = st.snapshot().0.into_iter().find(|t| t.task_id == id).unwrap();
    assert_eq!(rec.resume_times_ms.len(), 1);

    // The whole trace replays cleanly against the transition table.
    validate_trace(st.log_entries()).unwrap();
}

#[test]
fn suspend_on_suspended_task_is_illegal() {
    let mut st = CoordinatorState::new(CoordinatorConfig::default());
    let mut w = SimWorker::register(&mut st, "w1", 1, 1);
    let id = st.submit_task(descriptor("tl"), Priority::Low, None).unwrap();
    w.beat(&mut st, vec![]);
    w.beat(&mut st, vec![report(&id, ObservedState::Running, 0.1)]);
    st.request_preemption(&id, PreemptPrimitive::Suspend).unwrap();
    w.beat(&mut st, vec![report(&id, ObservedState::Running, 0.1)]);
    w.beat(&mut st, vec![report(&id, ObservedState::Suspended, 0.1)]);

    let err = st
        .request_preemption(&id, PreemptPrimitive::Suspend)
        .unwrap_err();
    assert!(matches!(err, CoordinatorError::Illegal(_)));
}

#[test]
fn suspend_beyond_max_suspended_exceeds_swap_budget() {
    let mut st = CoordinatorState::new(CoordinatorConfig::default());
    let mut w = SimWorker::register(&mut st, "w1", 2, 1);
    let a = st.submit_task(descriptor("a"), Priority::Low, None).unwrap();
    let b = st.submit_task(descriptor("b"), Priority::Low, None).unwrap();
    w.beat(&mut st, vec![]);
    w.beat(
        &mut st,
        vec![
            report(&a, ObservedState::Running, 0.1),
            report(&b, ObservedState::Running, 0.1),
        ],
    );

    st.request_preemption(&a, PreemptPrimitive::Suspend).unwrap();
    w.beat(
        &mut st,
        vec![
            report(&a, ObservedState::Running, 0.1),
            report(&b, ObservedState::Running, 0.1),
        ],
    );
    w.beat(
        &mut st,
        vec![
            report(&a, ObservedState::Suspended, 0.1),
            report(&b, ObservedState::Running, 0.1),
        ],
    );

    let err = st
        .request_preemption(&b, PreemptPrimitive::Suspend)
        .unwrap_err();
    assert!(matches!(err, CoordinatorError::SwapBudgetExceeded { .. }));
}

#[test]
fn suspend_blocked_by_memory_budget() {
    let config = CoordinatorConfig {
        per_task_memory_cap_bytes: 1 << 30,
        // One running slot plus one suspended task already hits the budget;
        // a second suspended task would exceed it.
        memory_budget_bytes: 2 << 30,
        ..CoordinatorConfig::default()
    };
    let mut st = CoordinatorState::new(config);
    let mut w = SimWorker::register(&mut st, "w1", 1, 4);
    let a = st.submit_task(descriptor("a"), Priority::Low, None).unwrap();
    w.beat(&mut st, vec![]);
    w.beat(&mut st, vec![report(&a, ObservedState::Running, 0.1)]);
    st.request_preemption(&a, PreemptPrimitive::Suspend).unwrap();
    w.beat(&mut st, vec![report(&a, ObservedState::Running, 0.1)]);
    w.beat(&mut st, vec![report(&a, ObservedState::Suspended, 0.1)]);

    // Slot freed; a second task launches and also asks to suspend.
    let b = st.submit_task(descriptor("b"), Priority::Low, None).unwrap();
    w.beat(&mut st, vec![report(&a, ObservedState::Suspended, 0.1)]);
    w.beat(
        &mut st,
        vec![
            report(&a, ObservedState::Suspended, 0.1),
            report(&b, ObservedState::Running, 0.1),
        ],
    );
    let err = st
        .request_preemption(&b, PreemptPrimitive::Suspend)
        .unwrap_err();
    assert!(matches!(err, CoordinatorError::SwapBudgetExceeded { .. }));
}

#[test]
fn completion_race_before_command_dispatch_drops_directive() {
    let mut st = CoordinatorState::new(CoordinatorConfig::default());
    let mut w = SimWorker::register(&mut st, "w1", 1, 1);
    let id = st.submit_task(descriptor("tl"), Priority::Low, None).unwrap();
    w.beat(&mut st, vec![]);
    w.beat(&mut st, vec![report(&id, ObservedState::Running, 0.5)]);
    st.request_preemption(&id, PreemptPrimitive::Suspend).unwrap();
    assert_eq!(task_state(&st, &id), TaskState::MustSuspend);

    // The completion-triggered heartbeat arrives before the command went
    // out: the task finished in the meanwhile.
    let reply = w.beat(&mut st, vec![report(&id, ObservedState::Succeeded, 1.0)]);
    assert_eq!(task_state(&st, &id), TaskState::Succeeded);
    assert!(
        reply.directives.is_empty(),
        "suspend directive must be dropped for a finished task"
    );
    validate_trace(st.log_entries()).unwrap();
}

#[test]
fn completion_race_after_command_dispatch_resolves_to_succeeded() {
    let mut st = CoordinatorState::new(CoordinatorConfig::default());
    let mut w = SimWorker::register(&mut st, "w1", 1, 1);
    let id = st.submit_task(descriptor("tl"), Priority::Low, None).unwrap();
    w.beat(&mut st, vec![]);
    w.beat(&mut st, vec![report(&id, ObservedState::Running, 0.5)]);
    st.request_preemption(&id, PreemptPrimitive::Suspend).unwrap();
    w.beat(&mut st, vec![report(&id, ObservedState::Running, 0.6)]);
    assert_eq!(task_state(&st, &id), TaskState::SuspendingSent);

    w.beat(&mut st, vec![report(&id, ObservedState::Succeeded, 1.0)]);
    assert_eq!(task_state(&st, &id), TaskState::Succeeded);
    validate_trace(st.log_entries()).unwrap();
}

#[test]
fn suspend_racing_failure_takes_worker_report() {
    let mut st = CoordinatorState::new(CoordinatorConfig::default());
    let mut w = SimWorker::register(&mut st, "w1", 1, 1);
    let id = st.submit_task(descriptor("tl"), Priority::Low, None).unwrap();
    w.beat(&mut st, vec![]);
    w.beat(&mut st, vec![report(&id, ObservedState::Running, 0.5)]);
    st.request_preemption(&id, PreemptPrimitive::Suspend).unwrap();
    w.beat(&mut st, vec![report(&id, ObservedState::Running, 0.5)]);

    w.beat(&mut st, vec![report(&id, ObservedState::Failed, 0.5)]);
    assert_eq!(task_state(&st, &id), TaskState::Failed);
}

#[test]
fn stale_heartbeat_is_dropped_without_state_change() {
    let mut st = CoordinatorState::new(CoordinatorConfig::default());
    let mut w = SimWorker::register(&mut st, "w1", 1, 1);
    let id = st.submit_task(descriptor("tl"), Priority::Low, None).unwrap();
    w.beat(&mut st, vec![]);
    w.beat(&mut st, vec![report(&id, ObservedState::Running, 0.3)]);

    // Replay sequence 1 with a bogus terminal report.
    let stale = HeartbeatMessage {
        worker_id: w.id.clone(),
        sequence_no: 1,
        task_reports: vec![report(&id, ObservedState::Succeeded, 1.0)],
        free_slots: 1,
        timestamp_ms: 0,
    };
    let reply = st.handle_heartbeat(&stale).unwrap();
    assert!(reply.is_empty());
    assert_eq!(task_state(&st, &id), TaskState::Running);
}

#[test]
fn kill_path_cleanup_then_killed_and_restart_counts_attempts() {
    let mut st = CoordinatorState::new(CoordinatorConfig::default());
    let mut w = SimWorker::register(&mut st, "w1", 1, 1);
    let id = st.submit_task(descriptor("tl"), Priority::Low, None).unwrap();
    w.beat(&mut st, vec![]);
    w.beat(&mut st, vec![report(&id, ObservedState::Running, 0.5)]);

    st.request_preemption(&id, PreemptPrimitive::Kill).unwrap();
    assert_eq!(task_state(&st, &id), TaskState::MustKill);
    let reply = w.beat(&mut st, vec![report(&id, ObservedState::Running, 0.5)]);
    assert_eq!(reply.directives[0].action, CommandAction::Kill);
    assert_eq!(task_state(&st, &id), TaskState::MustKill);

    w.beat(&mut st, vec![report(&id, ObservedState::Killed, 0.5)]);
    assert_eq!(task_state(&st, &id), TaskState::Killed);
    // CLEANUP appears in the trace between the confirmation and KILLED.
    let trace: Vec<_> = st
        .log_entries()
        .iter()
        .filter_map(|e| match e {
            preempt_protocol::eventlog::LogEntry::Transition { to, .. } => Some(*to),
            _ => None,
        })
        .collect();
    assert!(trace.contains(&TaskState::Cleanup));
    validate_trace(st.log_entries()).unwrap();

    // Restart: fresh attempt, progress reset, prior attempt archived.
    let attempt = st.restart_task(&id).unwrap();
    assert_eq!(attempt, 2);
    let rec = st.snapshot().0.into_iter().find(|t| t.task_id == id).unwrap();
    assert_eq!(rec.state, TaskState::Pending);
    assert_eq!(rec.progress_fraction, 0.0);
    assert_eq!(rec.attempts.len(), 1);
    assert_eq!(rec.attempts[0].end_state, TaskState::Killed);
    assert!((rec.attempts[0].final_progress - 0.5).abs() < 1e-9);

    // Relaunch happens on the next beat.
    let reply = w.beat(&mut st, vec![]);
    assert_eq!(reply.directives[0].action, CommandAction::Launch);
    st.check_invariants().unwrap();
}

#[test]
fn resume_after_worker_death_reschedules_from_scratch() {
    let config = CoordinatorConfig {
        heartbeat_interval_ms: 10,
        missed_heartbeats_dead: 5,
        ..CoordinatorConfig::default()
    };
    let mut st = CoordinatorState::new(config);
    let mut w1 = SimWorker::register(&mut st, "w1", 1, 1);
    let _w2 = SimWorker::register(&mut st, "w2", 1, 1);
    let id = st.submit_task(descriptor("tl"), Priority::Low, Some("w1".into())).unwrap();
    w1.beat(&mut st, vec![]);
    w1.beat(&mut st, vec![report(&id, ObservedState::Running, 0.4)]);
    st.request_preemption(&id, PreemptPrimitive::Suspend).unwrap();
    w1.beat(&mut st, vec![report(&id, ObservedState::Running, 0.4)]);
    w1.beat(&mut st, vec![report(&id, ObservedState::Suspended, 0.4)]);

    // w1 goes silent past the death horizon.
    std::thread::sleep(std::time::Duration::from_millis(120));
    let err = st.request_resume(&id).unwrap_err();
    assert!(matches!(err, CoordinatorError::WorkerLost { attempt: 2, .. }));

    let rec = st.snapshot().0.into_iter().find(|t| t.task_id == id).unwrap();
    assert_eq!(rec.state, TaskState::Pending);
    assert_eq!(rec.attempt_count, 2);
    assert_eq!(rec.progress_fraction, 0.0);
    assert_eq!(rec.assigned_worker, None);
    st.check_invariants().unwrap();
}

#[test]
fn resume_on_running_task_is_illegal() {
    let mut st = CoordinatorState::new(CoordinatorConfig::default());
    let mut w = SimWorker::register(&mut st, "w1", 1, 1);
    let id = st.submit_task(descriptor("tl"), Priority::Low, None).unwrap();
    w.beat(&mut st, vec![]);
    w.beat(&mut st, vec![report(&id, ObservedState::Running, 0.2)]);
    let err = st.request_resume(&id).unwrap_err();
    assert!(matches!(err, CoordinatorError::Illegal(_)));
}

#[test]
fn wait_semantics_single_slot_defers_second_launch() {
    let mut st = CoordinatorState::new(CoordinatorConfig::default());
    let mut w = SimWorker::register(&mut st, "w1", 1, 1);
    let low = st.submit_task(descriptor("tl"), Priority::Low, None).unwrap();
    w.beat(&mut st, vec![]);
    w.beat(&mut st, vec![report(&low, ObservedState::Running, 0.2)]);

    // High-priority task submitted while the slot is busy: stays PENDING.
    let high = st.submit_task(descriptor("th"), Priority::High, None).unwrap();
    let reply = w.beat(&mut st, vec![report(&low, ObservedState::Running, 0.5)]);
    assert!(reply.directives.is_empty());
    assert_eq!(task_state(&st, &high), TaskState::Pending);

    // The completion beat frees the slot and the same reply launches t_h.
    let reply = w.beat(&mut st, vec![report(&low, ObservedState::Succeeded, 1.0)]);
    assert_eq!(reply.directives.len(), 1);
    assert_eq!(reply.directives[0].action, CommandAction::Launch);
    assert_eq!(reply.directives[0].task_id, high);
    st.check_invariants().unwrap();
}

#[test]
fn high_priority_pending_dispatches_before_low() {
    let mut st = CoordinatorState::new(CoordinatorConfig::default());
    let mut w = SimWorker::register(&mut st, "w1", 1, 1);
    let low = st.submit_task(descriptor("tl"), Priority::Low, None).unwrap();
    let high = st.submit_task(descriptor("th"), Priority::High, None).unwrap();
    let reply = w.beat(&mut st, vec![]);
    assert_eq!(reply.directives.len(), 1);
    assert_eq!(reply.directives[0].task_id, high);
    let _ = low;
}

#[test]
fn progress_is_monotone_per_attempt() {
    let mut st = CoordinatorState::new(CoordinatorConfig::default());
    let mut w = SimWorker::register(&mut st, "w1", 1, 1);
    let id = st.submit_task(descriptor("tl"), Priority::Low, None).unwrap();
    w.beat(&mut st, vec![]);
    w.beat(&mut st, vec![report(&id, ObservedState::Running, 0.4)]);
    // A lower progress value must not move the record backwards.
    w.beat(&mut st, vec![report(&id, ObservedState::Running, 0.3)]);
    let rec = st.snapshot().0.into_iter().find(|t| t.task_id == id).unwrap();
    assert!((rec.progress_fraction - 0.4).abs() < 1e-9);
}

#[test]
fn event_subscription_carries_transitions_and_progress() {
    let mut st = CoordinatorState::new(CoordinatorConfig::default());
    let rx = st.subscribe();
    let mut w = SimWorker::register(&mut st, "w1", 1, 1);
    let id = st.submit_task(descriptor("tl"), Priority::Low, None).unwrap();
    w.beat(&mut st, vec![]);
    w.beat(&mut st, vec![report(&id, ObservedState::Running, 0.25)]);

    let events: Vec<_> = rx.try_iter().collect();
    let transitions = events
        .iter()
        .filter(|e| matches!(e, preempt_protocol::StateEvent::Transition { .. }))
        .count();
    let progress = events
        .iter()
        .filter(|e| matches!(e, preempt_protocol::StateEvent::Progress { .. }))
        .count();
    assert!(transitions >= 2, "launch + launched expected");
    assert!(progress >= 1);
}

#[test]
fn directives_are_delivered_exactly_once() {
    let mut st = CoordinatorState::new(CoordinatorConfig::default());
    let mut w = SimWorker::register(&mut st, "w1", 1, 1);
    let id = st.submit_task(descriptor("tl"), Priority::Low, None).unwrap();

    let mut seen: Vec<(preempt_protocol::TaskId, CommandAction)> = Vec::new();
    let collect = |st: &mut CoordinatorState,
                       w: &mut SimWorker,
                       reports: Vec<TaskReport>,
                       seen: &mut Vec<(preempt_protocol::TaskId, CommandAction)>| {
        let reply = w.beat(st, reports);
        for d in &reply.directives {
            seen.push((d.task_id.clone(), d.action));
        }
    };

    // A full suspend/resume round trip with extra idle beats between every
    // step; each command must appear exactly once across all replies.
    collect(&mut st, &mut w, vec![], &mut seen);
    for _ in 0..3 {
        collect(&mut st, &mut w, vec![report(&id, ObservedState::Running, 0.1)], &mut seen);
    }
    st.request_preemption(&id, PreemptPrimitive::Suspend).unwrap();
    for _ in 0..3 {
        collect(&mut st, &mut w, vec![report(&id, ObservedState::Running, 0.2)], &mut seen);
    }
    for _ in 0..3 {
        collect(&mut st, &mut w, vec![report(&id, ObservedState::Suspended, 0.2)], &mut seen);
    }
    st.request_resume(&id).unwrap();
    for _ in 0..3 {
        collect(&mut st, &mut w, vec![report(&id, ObservedState::Suspended, 0.2)], &mut seen);
    }
    for _ in 0..3 {
        collect(&mut st, &mut w, vec![report(&id, ObservedState::Running, 0.5)], &mut seen);
    }
    collect(&mut st, &mut w, vec![report(&id, ObservedState::Succeeded, 1.0)], &mut seen);

    let expected = vec![
        (id.clone(), CommandAction::Launch),
        (id.clone(), CommandAction::Suspend),
        (id.clone(), CommandAction::Resume),
    ];
    assert_eq!(seen, expected, "each directive exactly once, in order");
}

#[test]
fn swapped_bytes_peak_tracks_maximum() {
    let mut st = CoordinatorState::new(CoordinatorConfig::default());
    let mut w = SimWorker::register(&mut st, "w1", 1, 1);
    let id = st.submit_task(descriptor("tl"), Priority::Low, None).unwrap();
    w.beat(&mut st, vec![]);
    let mut r = report(&id, ObservedState::Running, 0.1);
    r.swapped_bytes = 5 << 20;
    w.beat(&mut st, vec![r]);
    let mut r = report(&id, ObservedState::Running, 0.2);
    r.swapped_bytes = 2 << 20;
    w.beat(&mut st, vec![r]);
    let rec = st.snapshot().0.into_iter().find(|t| t.task_id == id).unwrap();
    assert_eq!(rec.swapped_bytes_peak, 5 << 20);
    assert_eq!(rec.swapped_bytes, 2 << 20);
}
