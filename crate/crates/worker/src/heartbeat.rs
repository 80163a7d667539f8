//! The worker's network loop: register, heartbeat at a fixed interval (plus
//! an immediate extra beat whenever a task exits), apply piggybacked
//! directives from the reply, reconnect with backoff on failure.

use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::time::Duration;

use log::{info, warn};
use preempt_protocol::{read_message, write_message, CodecError, Message, TaskId};

use crate::agent::WorkerAgent;

const BACKOFF_MIN: Duration = Duration::from_millis(100);
const BACKOFF_MAX: Duration = Duration::from_secs(2);

/// Runs until `shutdown` is set. Errors are logged; the loop never dies.
pub fn run_heartbeat_loop(
    agent: Arc<WorkerAgent>,
    exit_rx: Receiver<TaskId>,
    shutdown: Arc<AtomicBool>,
) {
    let mut backoff = BACKOFF_MIN;
    while !shutdown.load(Ordering::Relaxed) {
        match TcpStream::connect(&agent.config.coordinator) {
            Ok(stream) => {
                backoff = BACKOFF_MIN;
                match session(&agent, stream, &exit_rx, &shutdown) {
                    Ok(()) => return, // clean shutdown
                    Err(e) => warn!("heartbeat session ended: {e}; reconnecting"),
                }
            }
            Err(e) => {
                warn!(
                    "cannot reach coordinator {}: {e}; retrying in {backoff:?}",
                    agent.config.coordinator
                );
            }
        }
        std::thread::sleep(backoff);
        backoff = (backoff * 2).min(BACKOFF_MAX);
    }
}

fn session(
    agent: &WorkerAgent,
    mut stream: TcpStream,
    exit_rx: &Receiver<TaskId>,
    shutdown: &AtomicBool,
) -> Result<(), CodecError> {
    stream.set_nodelay(true)?;
    let register = Message::Register {
        worker_id: agent.config.worker_id.clone(),
        address: stream.local_addr()?.to_string(),
        slots_total: agent.config.slots_total,
        max_suspended: agent.config.max_suspended,
    };
    write_message(&mut stream, &register)?;
    match read_message(&mut stream)? {
        Message::RegisterOk => {}
        other => {
            warn!("unexpected register reply: {other:?}");
            return Err(CodecError::ConnectionClosed);
        }
    }
    info!(
        "registered with coordinator as {}",
        agent.config.worker_id
    );

    let interval = Duration::from_millis(agent.config.heartbeat_ms);
    let mut sequence_no: u64 = 1;
    loop {
        if shutdown.load(Ordering::Relaxed) {
            return Ok(());
        }
        let hb = agent.build_heartbeat(sequence_no);
        write_message(&mut stream, &Message::Heartbeat(hb))?;
        match read_message(&mut stream)? {
            Message::Commands(cmds) => agent.apply_commands(&cmds),
            Message::Error { code, message } => {
                warn!("coordinator error {code}: {message}");
                if code == "unknown_worker" {
                    // Coordinator restarted or dropped us; re-register.
                    return Err(CodecError::ConnectionClosed);
                }
            }
            other => warn!("unexpected heartbeat reply: {other:?}"),
        }
        sequence_no += 1;

        // Wait out the interval, but beat immediately if a task exits.
        match exit_rx.recv_timeout(interval) {
            Ok(_task) => {}
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => return Ok(()),
        }
    }
}
