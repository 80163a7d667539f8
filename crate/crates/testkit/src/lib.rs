//! Simulated worker for tests: speaks the real wire protocol over TCP but
//! advances task progress on a wall-clock timer instead of running
//! processes. Suspend freezes progress, resume continues it, kill discards
//! the attempt; completions trigger an immediate extra heartbeat, like the
//! real worker.

use std::collections::BTreeMap;
use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::{debug, warn};
use preempt_protocol::{
    read_message, write_message, CommandAction, CommandMessage, HeartbeatMessage, Message,
    ObservedState, TaskId, TaskReport, WorkerId,
};

#[derive(Debug, Clone)]
pub struct SimWorkerConfig {
    pub worker_id: String,
    pub coordinator: String,
    pub slots_total: u32,
    pub max_suspended: u32,
    pub heartbeat_ms: u64,
    /// Simulated duration of one full task run.
    pub task_duration_ms: u64,
    /// Simulated per-task memory statistics reported on heartbeats.
    pub resident_bytes: u64,
    pub swapped_bytes_when_suspended: u64,
    /// Tasks fail once their progress crosses this value (fault injection).
    pub fail_tasks_at: Option<f64>,
}

impl SimWorkerConfig {
    pub fn new(coordinator: &str) -> SimWorkerConfig {
        SimWorkerConfig {
            worker_id: "sim-worker".into(),
            coordinator: coordinator.to_string(),
            slots_total: 1,
            max_suspended: 1,
            heartbeat_ms: 30,
            task_duration_ms: 600,
            resident_bytes: 64 << 20,
            swapped_bytes_when_suspended: 0,
            fail_tasks_at: None,
        }
    }
}

struct SimTask {
    progress: f64,
    state: ObservedState,
    last_advance: Instant,
    swapped: u64,
}

pub struct SimWorker {
    stop: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl SimWorker {
    pub fn start(config: SimWorkerConfig) -> SimWorker {
        let stop = Arc::new(AtomicBool::new(false));
        let stop2 = stop.clone();
        let handle = std::thread::spawn(move || run(config, stop2));
        SimWorker {
            stop,
            handle: Some(handle),
        }
    }

    pub fn stop(mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for SimWorker {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn run(config: SimWorkerConfig, stop: Arc<AtomicBool>) {
    let worker_id = WorkerId(config.worker_id.clone());
    while !stop.load(Ordering::Relaxed) {
        match TcpStream::connect(&config.coordinator) {
            Ok(stream) => {
                if let Err(e) = session(&config, &worker_id, stream, &stop) {
                    if stop.load(Ordering::Relaxed) {
                        return;
                    }
                    warn!("sim worker session ended: {e}");
                }
            }
            Err(e) => debug!("sim worker connect failed: {e}"),
        }
        std::thread::sleep(Duration::from_millis(20));
    }
}

fn session(
    config: &SimWorkerConfig,
    worker_id: &WorkerId,
    mut stream: TcpStream,
    stop: &AtomicBool,
) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let register = Message::Register {
        worker_id: worker_id.clone(),
        address: "sim://worker".into(),
        slots_total: config.slots_total,
        max_suspended: config.max_suspended,
    };
    write_message(&mut stream, &register).map_err(io_err)?;
    match read_message(&mut stream).map_err(io_err)? {
        Message::RegisterOk => {}
        other => {
            warn!("unexpected register reply {other:?}");
            return Ok(());
        }
    }

    let mut tasks: BTreeMap<TaskId, SimTask> = BTreeMap::new();
    let mut seq: u64 = 0;
    let started = Instant::now();
    let duration = config.task_duration_ms.max(1) as f64;

    loop {
        if stop.load(Ordering::Relaxed) {
            return Ok(());
        }
        // Advance simulated progress.
        for t in tasks.values_mut() {
            let now = Instant::now();
            if t.state == ObservedState::Running {
                let dt = now.duration_since(t.last_advance).as_secs_f64() * 1000.0;
                t.progress = (t.progress + dt / duration).min(1.0);
                if let Some(fail_at) = config.fail_tasks_at {
                    if t.progress >= fail_at {
                        t.state = ObservedState::Failed;
                    }
                }
                if t.state == ObservedState::Running && t.progress >= 1.0 {
                    t.state = ObservedState::Succeeded;
                }
            }
            t.last_advance = now;
        }

        seq += 1;
        let reports: Vec<TaskReport> = tasks
            .iter()
            .map(|(id, t)| TaskReport {
                task_id: id.clone(),
                observed_state: t.state,
                progress_fraction: t.progress,
                resident_bytes: config.resident_bytes,
                swapped_bytes: t.swapped,
            })
            .collect();
        let running = tasks
            .values()
            .filter(|t| t.state == ObservedState::Running)
            .count() as u32;
        let hb = HeartbeatMessage {
            worker_id: worker_id.clone(),
            sequence_no: seq,
            task_reports: reports,
            free_slots: config.slots_total.saturating_sub(running),
            timestamp_ms: started.elapsed().as_millis() as u64,
        };
        write_message(&mut stream, &Message::Heartbeat(hb)).map_err(io_err)?;
        match read_message(&mut stream).map_err(io_err)? {
            Message::Commands(cmds) => apply(config, &mut tasks, &cmds),
            Message::Error { code, message } => {
                warn!("coordinator error {code}: {message}");
                return Ok(());
            }
            other => warn!("unexpected reply {other:?}"),
        }

        // Sleep out the interval in small steps; a completion during the
        // wait triggers an immediate extra beat.
        let deadline = Instant::now() + Duration::from_millis(config.heartbeat_ms);
        'wait: while Instant::now() < deadline {
            if stop.load(Ordering::Relaxed) {
                return Ok(());
            }
            std::thread::sleep(Duration::from_millis(5));
            for t in tasks.values_mut() {
                if t.state == ObservedState::Running {
                    let now = Instant::now();
                    let dt = now.duration_since(t.last_advance).as_secs_f64() * 1000.0;
                    t.progress = (t.progress + dt / duration).min(1.0);
                    t.last_advance = now;
                    if t.progress >= 1.0 {
                        t.state = ObservedState::Succeeded;
                        break 'wait; // completion-triggered beat
                    }
                }
            }
        }
    }
}

fn apply(config: &SimWorkerConfig, tasks: &mut BTreeMap<TaskId, SimTask>, cmds: &CommandMessage) {
    for d in &cmds.directives {
        match d.action {
            CommandAction::Launch => {
                tasks.insert(
                    d.task_id.clone(),
                    SimTask {
                        progress: 0.0,
                        state: ObservedState::Running,
                        last_advance: Instant::now(),
                        swapped: 0,
                    },
                );
            }
            CommandAction::Suspend => {
                if let Some(t) = tasks.get_mut(&d.task_id) {
                    if !t.state.is_terminal() {
                        t.state = ObservedState::Suspended;
                        t.swapped = config.swapped_bytes_when_suspended;
                    }
                }
            }
            CommandAction::Resume => {
                if let Some(t) = tasks.get_mut(&d.task_id) {
                    if t.state == ObservedState::Suspended {
                        t.state = ObservedState::Running;
                        t.last_advance = Instant::now();
                    }
                }
            }
            CommandAction::Kill => {
                if let Some(t) = tasks.get_mut(&d.task_id) {
                    if !t.state.is_terminal() {
                        t.state = ObservedState::Killed;
                    }
                }
            }
        }
    }
}

fn io_err(e: preempt_protocol::CodecError) -> std::io::Error {
    std::io::Error::other(e.to_string())
}
