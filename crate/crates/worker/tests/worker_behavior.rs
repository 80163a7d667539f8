//! Worker agent behavior against scripted shell tasks: launch, suspend,
//! resume, kill, slot limits, spawn failures, and the completion race.

#![cfg(unix)]

use std::os::unix::fs::PermissionsExt;
use std::path::Path;
use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use preempt_protocol::{ObservedState, TaskId, TaskLaunchDescriptor, WorkerId};
use preempt_worker::{process_state, WorkerAgent, WorkerConfig, WorkerError};

fn write_script(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    let mut perms = std::fs::metadata(&path).unwrap().permissions();
    perms.set_mode(0o755);
    std::fs::set_permissions(&path, perms).unwrap();
    path.to_str().unwrap().to_string()
}

/// ~1.5 s of work in 30 progress steps.
const SLOW_SCRIPT: &str = r#"#!/bin/sh
i=0
while [ $i -lt 30 ]; do
  i=$((i+1))
  if [ $i -ge 30 ]; then
    echo "PROGRESS 1.000000"
  else
    printf 'PROGRESS 0.%03d000\n' $((i*33))
  fi
  sleep 0.05
done
echo "SUMMARY tuples=30 checksum=ok"
"#;

const FAST_SCRIPT: &str = r#"#!/bin/sh
echo "PROGRESS 1.000000"
echo "SUMMARY tuples=1 checksum=ok"
"#;

fn descriptor(exe: &str, task_id: &str) -> TaskLaunchDescriptor {
    TaskLaunchDescriptor {
        task_id: task_id.into(),
        executable: exe.to_string(),
        args: vec![],
        input_path: "/dev/null".into(),
        input_bytes: 1,
        ballast_bytes: 0,
        progress_interval_tuples: 1,
    }
}

fn agent(dir: &Path, slots: u32) -> (Arc<WorkerAgent>, mpsc::Receiver<TaskId>) {
    let (exit_tx, exit_rx) = mpsc::channel();
    let agent = WorkerAgent::new(
        WorkerConfig {
            worker_id: WorkerId("w-test".into()),
            coordinator: "unused".into(),
            slots_total: slots,
            max_suspended: 1,
            heartbeat_ms: 100,
            workdir: dir.join("work"),
        },
        exit_tx,
    )
    .unwrap();
    (Arc::new(agent), exit_rx)
}

fn wait_for<F: Fn() -> bool>(cond: F, timeout: Duration, what: &str) {
    let start = Instant::now();
    while !cond() {
        assert!(start.elapsed() < timeout, "timed out waiting for {what}");
        std::thread::sleep(Duration::from_millis(10));
    }
}

#[test]
fn launch_runs_and_reports_progress() {
    let dir = tempfile::tempdir().unwrap();
    let exe = write_script(dir.path(), "slow.sh", SLOW_SCRIPT);
    let (agent, _exit_rx) = agent(dir.path(), 1);
    let id: TaskId = "t-1".into();

    agent.launch(&descriptor(&exe, "t-1")).unwrap();
    let t = agent.task(&id).unwrap();
    assert_eq!(t.observed_state, ObservedState::Running);
    assert_eq!(t.progress_fraction, 0.0);

    wait_for(
        || agent.task(&id).unwrap().progress_fraction > 0.1,
        Duration::from_secs(5),
        "progress",
    );
    let hb = agent.build_heartbeat(1);
    assert_eq!(hb.free_slots, 0);
    assert_eq!(hb.task_reports.len(), 1);

    wait_for(
        || agent.task(&id).unwrap().observed_state == ObservedState::Succeeded,
        Duration::from_secs(10),
        "success",
    );
    let t = agent.task(&id).unwrap();
    assert_eq!(t.progress_fraction, 1.0);
    let summary = t.summary.unwrap();
    assert_eq!(summary.tuples, 30);
    assert!(summary.checksum_ok);
    assert_eq!(agent.build_heartbeat(2).free_slots, 1);
    agent.shutdown();
}

#[test]
fn suspend_confirms_os_stop_and_blocks_progress() {
    let dir = tempfile::tempdir().unwrap();
    let exe = write_script(dir.path(), "slow.sh", SLOW_SCRIPT);
    let (agent, _exit_rx) = agent(dir.path(), 1);
    let id: TaskId = "t-susp".into();

    agent.launch(&descriptor(&exe, "t-susp")).unwrap();
    wait_for(
        || agent.task(&id).unwrap().progress_fraction > 0.2,
        Duration::from_secs(5),
        "progress before suspend",
    );
    agent.suspend(&id).unwrap();
    wait_for(
        || agent.task(&id).unwrap().observed_state == ObservedState::Suspended,
        Duration::from_secs(3),
        "suspended",
    );
    let t = agent.task(&id).unwrap();
    // The OS agrees the process group leader is stopped.
    assert_eq!(process_state(t.pid), Some('T'));
    // The suspended task no longer occupies a running slot.
    assert_eq!(agent.build_heartbeat(1).free_slots, 1);

    // No progress records while suspended.
    let frozen = t.progress_fraction;
    std::thread::sleep(Duration::from_millis(400));
    let t2 = agent.task(&id).unwrap();
    assert_eq!(t2.progress_fraction, frozen);
    assert_eq!(t2.progress_records_while_suspended, 0);

    agent.resume(&id).unwrap();
    wait_for(
        || agent.task(&id).unwrap().observed_state == ObservedState::Running,
        Duration::from_secs(3),
        "running again",
    );
    assert_ne!(process_state(t.pid), Some('T'));

    wait_for(
        || agent.task(&id).unwrap().observed_state == ObservedState::Succeeded,
        Duration::from_secs(10),
        "success after resume",
    );
    let t3 = agent.task(&id).unwrap();
    assert_eq!(t3.summary.as_ref().unwrap().tuples, 30);
    assert!(t3.progress_fraction >= frozen);
    assert_eq!(t3.progress_records_while_suspended, 0);
    agent.shutdown();
}

#[test]
fn kill_removes_temp_outputs_and_reports_killed() {
    let dir = tempfile::tempdir().unwrap();
    let exe = write_script(dir.path(), "slow.sh", SLOW_SCRIPT);
    let (agent, exit_rx) = agent(dir.path(), 1);
    let id: TaskId = "t-kill".into();

    agent.launch(&descriptor(&exe, "t-kill")).unwrap();
    let temp_dir = agent.task(&id).unwrap().temp_output_dir.clone();
    assert!(temp_dir.exists());
    wait_for(
        || agent.task(&id).unwrap().progress_fraction > 0.1,
        Duration::from_secs(5),
        "progress before kill",
    );
    agent.kill(&id).unwrap();
    wait_for(
        || agent.task(&id).unwrap().observed_state == ObservedState::Killed,
        Duration::from_secs(3),
        "killed",
    );
    assert!(!temp_dir.exists(), "temp outputs not cleaned up");
    // Kill produced an exit notification for the immediate heartbeat.
    assert_eq!(exit_rx.recv_timeout(Duration::from_secs(1)).unwrap(), id);
    agent.shutdown();
}

#[test]
fn kill_suspended_task_without_resuming() {
    let dir = tempfile::tempdir().unwrap();
    let exe = write_script(dir.path(), "slow.sh", SLOW_SCRIPT);
    let (agent, _exit_rx) = agent(dir.path(), 1);
    let id: TaskId = "t-ks".into();

    agent.launch(&descriptor(&exe, "t-ks")).unwrap();
    wait_for(
        || agent.task(&id).unwrap().progress_fraction > 0.1,
        Duration::from_secs(5),
        "progress",
    );
    agent.suspend(&id).unwrap();
    wait_for(
        || agent.task(&id).unwrap().observed_state == ObservedState::Suspended,
        Duration::from_secs(3),
        "suspended",
    );
    agent.kill(&id).unwrap();
    wait_for(
        || agent.task(&id).unwrap().observed_state == ObservedState::Killed,
        Duration::from_secs(3),
        "killed while stopped",
    );
    agent.shutdown();
}

#[test]
fn no_free_slot_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let exe = write_script(dir.path(), "slow.sh", SLOW_SCRIPT);
    let (agent, _exit_rx) = agent(dir.path(), 1);

    agent.launch(&descriptor(&exe, "t-a")).unwrap();
    let err = agent.launch(&descriptor(&exe, "t-b")).unwrap_err();
    assert!(matches!(err, WorkerError::NoFreeSlot { .. }));
    agent.shutdown();
}

#[test]
fn spawn_failure_surfaces_as_failed_report() {
    let dir = tempfile::tempdir().unwrap();
    let (agent, exit_rx) = agent(dir.path(), 1);
    let id: TaskId = "t-miss".into();

    let err = agent
        .launch(&descriptor("/nonexistent/binary", "t-miss"))
        .unwrap_err();
    assert!(matches!(err, WorkerError::SpawnFailure(_)));
    let t = agent.task(&id).unwrap();
    assert_eq!(t.observed_state, ObservedState::Failed);
    let hb = agent.build_heartbeat(1);
    assert_eq!(hb.task_reports.len(), 1);
    assert_eq!(hb.task_reports[0].observed_state, ObservedState::Failed);
    assert_eq!(exit_rx.recv_timeout(Duration::from_secs(1)).unwrap(), id);
    agent.shutdown();
}

#[test]
fn suspend_after_exit_keeps_succeeded() {
    let dir = tempfile::tempdir().unwrap();
    let exe = write_script(dir.path(), "fast.sh", FAST_SCRIPT);
    let (agent, _exit_rx) = agent(dir.path(), 1);
    let id: TaskId = "t-race".into();

    agent.launch(&descriptor(&exe, "t-race")).unwrap();
    wait_for(
        || agent.task(&id).unwrap().observed_state == ObservedState::Succeeded,
        Duration::from_secs(5),
        "fast success",
    );
    // The suspend directive arrives after the task completed: the
    // completion wins and the report stays SUCCEEDED.
    agent.suspend(&id).unwrap();
    std::thread::sleep(Duration::from_millis(200));
    assert_eq!(
        agent.task(&id).unwrap().observed_state,
        ObservedState::Succeeded
    );
    agent.shutdown();
}

#[test]
fn relaunch_after_kill_is_a_fresh_attempt() {
    let dir = tempfile::tempdir().unwrap();
    let exe = write_script(dir.path(), "slow.sh", SLOW_SCRIPT);
    let (agent, _exit_rx) = agent(dir.path(), 1);
    let id: TaskId = "t-re".into();
    let d = descriptor(&exe, "t-re");

    agent.launch(&d).unwrap();
    wait_for(
        || agent.task(&id).unwrap().progress_fraction > 0.1,
        Duration::from_secs(5),
        "progress",
    );
    agent.kill(&id).unwrap();
    wait_for(
        || agent.task(&id).unwrap().observed_state == ObservedState::Killed,
        Duration::from_secs(3),
        "killed",
    );
    agent.launch(&d).unwrap();
    let t = agent.task(&id).unwrap();
    assert_eq!(t.attempt, 2);
    assert_eq!(t.observed_state, ObservedState::Running);
    assert_eq!(t.progress_fraction, 0.0);
    agent.shutdown();
}

#[test]
fn memory_sampling_reports_resident_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let exe = write_script(dir.path(), "slow.sh", SLOW_SCRIPT);
    let (agent, _exit_rx) = agent(dir.path(), 1);
    let id: TaskId = "t-mem".into();

    agent.launch(&descriptor(&exe, "t-mem")).unwrap();
    wait_for(
        || agent.task(&id).unwrap().resident_bytes > 0,
        Duration::from_secs(5),
        "memory sample",
    );
    // Swap accounting depends on the kernel; the flag must agree with the
    // platform probe rather than being silently zero.
    let t = agent.task(&id).unwrap();
    assert_eq!(
        t.swap_supported,
        preempt_worker::swap_accounting_supported()
    );
    agent.shutdown();
}
