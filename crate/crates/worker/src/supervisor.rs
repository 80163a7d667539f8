//! Per-task supervisory thread: owns the child process and its progress
//! pipe, delivers job-control signals, and reaps the exit.
//!
//! Suspension is confirmed against the OS, not assumed: after SIGTSTP the
//! supervisor polls the process state until the kernel reports it stopped,
//! drains the pipe (a stopped process cannot write, so the buffer is
//! complete), and only then reports SUSPENDED.

use std::os::unix::io::{AsRawFd, RawFd};
use std::process::{Child, ChildStdout, ExitStatus};
use std::sync::mpsc::{Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use log::{debug, warn};
use preempt_protocol::{ObservedState, TaskId, TaskState, TransitionEvent};

use crate::eventlog::{observed_as_state, EventLogFile};
use crate::local::{LocalTask, TaskCommand, TaskSummary};
use crate::procinfo;

const TICK: Duration = Duration::from_millis(5);
const STOP_POLL: Duration = Duration::from_millis(10);
const STOP_TIMEOUT: Duration = Duration::from_millis(1000);
const MEM_SAMPLE_INTERVAL: Duration = Duration::from_millis(200);

pub struct Supervisor {
    task_id: TaskId,
    pid: u32,
    child: Child,
    stdout_fd: RawFd,
    _stdout: ChildStdout,
    acc: Vec<u8>,
    shared: Arc<Mutex<LocalTask>>,
    log: Arc<EventLogFile>,
    exit_tx: Sender<TaskId>,
    cmd_rx: Receiver<TaskCommand>,
    /// Suspension handshake timed out; report FAILED instead of SUSPENDED.
    force_failed: bool,
}

impl Supervisor {
    pub fn new(
        mut child: Child,
        shared: Arc<Mutex<LocalTask>>,
        log: Arc<EventLogFile>,
        exit_tx: Sender<TaskId>,
        cmd_rx: Receiver<TaskCommand>,
    ) -> Supervisor {
        let stdout = child.stdout.take().expect("child stdout must be piped");
        let fd = stdout.as_raw_fd();
        unsafe {
            let flags = libc::fcntl(fd, libc::F_GETFL);
            libc::fcntl(fd, libc::F_SETFL, flags | libc::O_NONBLOCK);
        }
        let (task_id, pid) = {
            let t = shared.lock().unwrap();
            (t.task_id.clone(), t.pid)
        };
        Supervisor {
            task_id,
            pid,
            child,
            stdout_fd: fd,
            _stdout: stdout,
            acc: Vec::new(),
            shared,
            log,
            exit_tx,
            cmd_rx,
            force_failed: false,
        }
    }

    pub fn run(mut self) {
        let mut last_sample = Instant::now();
        loop {
            self.drain_pipe();
            while let Ok(cmd) = self.cmd_rx.try_recv() {
                let exited = match cmd {
                    TaskCommand::Suspend => self.do_suspend(),
                    TaskCommand::Resume => self.do_resume(),
                    TaskCommand::Kill => self.do_kill(),
                };
                if let Some(status) = exited {
                    self.finalize(status);
                    return;
                }
            }
            match self.child.try_wait() {
                Ok(Some(status)) => {
                    self.finalize(status);
                    return;
                }
                Ok(None) => {}
                Err(e) => {
                    warn!("{}: try_wait failed: {e}", self.task_id);
                }
            }
            if last_sample.elapsed() >= MEM_SAMPLE_INTERVAL {
                self.sample_memory();
                last_sample = Instant::now();
            }
            std::thread::sleep(TICK);
        }
    }

    fn signal_group(&self, sig: libc::c_int) {
        unsafe {
            libc::kill(-(self.pid as libc::pid_t), sig);
        }
    }

    fn observed(&self) -> ObservedState {
        self.shared.lock().unwrap().observed_state
    }

    /// SIGTSTP the process group, confirm the stop against the OS, then
    /// report SUSPENDED. If the process exited first this is the completion
    /// race: the exit status is returned and reported instead.
    fn do_suspend(&mut self) -> Option<ExitStatus> {
        if self.observed().is_terminal() {
            debug!("{}: suspend on terminal task ignored", self.task_id);
            return None;
        }
        self.signal_group(libc::SIGTSTP);
        let deadline = Instant::now() + STOP_TIMEOUT;
        loop {
            self.drain_pipe();
            // Completion race: the task may finish before (or while) the
            // stop lands; the exit wins.
            match self.child.try_wait() {
                Ok(Some(status)) => return Some(status),
                Ok(None) => {}
                Err(_) => {}
            }
            match procinfo::process_state(self.pid) {
                Some('T') => break,
                _ if Instant::now() >= deadline => {
                    warn!("{}: stop confirmation timed out", self.task_id);
                    self.force_failed = true;
                    self.signal_group(libc::SIGKILL);
                    return None; // reaped by the main loop
                }
                _ => std::thread::sleep(STOP_POLL),
            }
        }
        // Stopped: nothing more can be written, so one final drain empties
        // the pipe before we flip the state. Progress arriving after this
        // point would be a real violation.
        self.drain_pipe();
        self.sample_memory();
        {
            let mut t = self.shared.lock().unwrap();
            let from = observed_as_state(t.observed_state);
            t.observed_state = ObservedState::Suspended;
            self.log.transition(
                &self.task_id,
                from,
                TransitionEvent::WorkerConfirmedSuspended,
                TaskState::Suspended,
            );
        }
        None
    }

    /// Sample swap (the peak attributable to the suspension), SIGCONT, and
    /// confirm the process left the stopped state.
    fn do_resume(&mut self) -> Option<ExitStatus> {
        if self.observed().is_terminal() {
            debug!("{}: resume on terminal task ignored", self.task_id);
            return None;
        }
        self.sample_memory();
        self.signal_group(libc::SIGCONT);
        let deadline = Instant::now() + STOP_TIMEOUT;
        loop {
            match self.child.try_wait() {
                Ok(Some(status)) => return Some(status),
                _ => {}
            }
            match procinfo::process_state(self.pid) {
                Some('T') => {
                    if Instant::now() >= deadline {
                        warn!("{}: continue confirmation timed out", self.task_id);
                        self.force_failed = true;
                        self.signal_group(libc::SIGKILL);
                        return None;
                    }
                    std::thread::sleep(STOP_POLL);
                }
                _ => break,
            }
        }
        {
            let mut t = self.shared.lock().unwrap();
            let from = observed_as_state(t.observed_state);
            t.observed_state = ObservedState::Running;
            self.log.transition(
                &self.task_id,
                from,
                TransitionEvent::WorkerConfirmedRunning,
                TaskState::Running,
            );
        }
        None
    }

    /// SIGKILL the process group; a stopped process is killable without
    /// resuming it first. Idempotent no-op if the task is already gone.
    fn do_kill(&mut self) -> Option<ExitStatus> {
        if self.observed().is_terminal() {
            debug!("{}: kill on terminal task ignored", self.task_id);
            return None;
        }
        self.shared.lock().unwrap().kill_requested = true;
        self.signal_group(libc::SIGKILL);
        None // reaped by the main loop
    }

    fn sample_memory(&self) {
        if let Some(mem) = procinfo::sample_memory(self.pid) {
            let mut t = self.shared.lock().unwrap();
            t.resident_bytes = mem.resident_bytes;
            t.swapped_bytes = mem.swapped_bytes;
            t.swap_supported = mem.swap_supported;
        }
    }

    fn drain_pipe(&mut self) {
        let mut chunk = [0u8; 8192];
        loop {
            let n = unsafe {
                libc::read(
                    self.stdout_fd,
                    chunk.as_mut_ptr() as *mut libc::c_void,
                    chunk.len(),
                )
            };
            if n > 0 {
                self.acc.extend_from_slice(&chunk[..n as usize]);
            } else {
                break; // EAGAIN, EOF or error; lines so far are complete
            }
        }
        while let Some(pos) = self.acc.iter().position(|&b| b == b'\n') {
            let line: Vec<u8> = self.acc.drain(..=pos).collect();
            if let Ok(text) = std::str::from_utf8(&line[..line.len() - 1]) {
                self.parse_line(text.trim_end());
            }
        }
    }

    fn parse_line(&self, line: &str) {
        let mut t = self.shared.lock().unwrap();
        if let Some(v) = line.strip_prefix("PROGRESS ") {
            if t.observed_state == ObservedState::Suspended {
                t.progress_records_while_suspended += 1;
                warn!("{}: progress record while suspended", self.task_id);
            }
            if let Ok(f) = v.trim().parse::<f64>() {
                // Progress is monotone within an attempt; ignore stale lines.
                if f.is_finite() && (0.0..=1.0).contains(&f) && f > t.progress_fraction {
                    t.progress_fraction = f;
                }
            }
        } else if line == "RESUMED" {
            t.resumed_markers += 1;
        } else if let Some(rest) = line.strip_prefix("SUMMARY ") {
            let mut tuples = None;
            let mut ok = None;
            for field in rest.split_whitespace() {
                if let Some(v) = field.strip_prefix("tuples=") {
                    tuples = v.parse::<u64>().ok();
                } else if let Some(v) = field.strip_prefix("checksum=") {
                    ok = Some(v == "ok");
                }
            }
            if let (Some(tuples), Some(checksum_ok)) = (tuples, ok) {
                t.summary = Some(TaskSummary { tuples, checksum_ok });
            }
        }
    }

    fn finalize(&mut self, status: ExitStatus) {
        self.drain_pipe();
        let (from, observed, event) = {
            let mut t = self.shared.lock().unwrap();
            let from = observed_as_state(t.observed_state);
            let (observed, event) = if t.kill_requested {
                (ObservedState::Killed, TransitionEvent::WorkerConfirmedKilled)
            } else if self.force_failed || !status.success() {
                (ObservedState::Failed, TransitionEvent::WorkerReportedFailure)
            } else {
                (
                    ObservedState::Succeeded,
                    TransitionEvent::WorkerReportedSuccess,
                )
            };
            t.observed_state = observed;
            if observed == ObservedState::Succeeded && t.progress_fraction < 1.0 {
                t.progress_fraction = 1.0;
            }
            (from, observed, event)
        };

        if observed == ObservedState::Killed {
            // The cleanup step: temporary outputs of a killed task are removed.
            let dir = self.shared.lock().unwrap().temp_output_dir.clone();
            let _ = std::fs::remove_dir_all(&dir);
        }

        self.log
            .transition(&self.task_id, from, event, observed_as_state(observed));
        {
            let t = self.shared.lock().unwrap();
            if let Some(s) = &t.summary {
                self.log.note(
                    self.task_id.as_str(),
                    &format!(
                        "summary tuples={} checksum={} attempt={}",
                        s.tuples,
                        if s.checksum_ok { "ok" } else { "fail" },
                        t.attempt
                    ),
                );
            }
            self.log.note(
                self.task_id.as_str(),
                &format!(
                    "suspend_progress_records count={} attempt={}",
                    t.progress_records_while_suspended, t.attempt
                ),
            );
            self.log.note(
                self.task_id.as_str(),
                &format!(
                    "final progress={:.6} attempt={} state={}",
                    t.progress_fraction,
                    t.attempt,
                    observed_as_state(observed)
                ),
            );
        }
        let _ = self.exit_tx.send(self.task_id.clone());
    }
}
