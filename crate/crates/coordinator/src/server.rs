//! TCP front end: one listener, one thread per connection. Worker traffic
//! and the control API share the framing; a connection that sends
//! `Subscribe` turns into a push-only event stream.

use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use log::{debug, info, warn};
use preempt_protocol::{read_message, write_message, CodecError, Message};

use crate::state::{CoordinatorError, CoordinatorState};

pub struct CoordinatorServer {
    pub state: Arc<Mutex<CoordinatorState>>,
    listener: TcpListener,
    shutdown: Arc<AtomicBool>,
}

impl CoordinatorServer {
    pub fn bind(state: CoordinatorState, addr: &str) -> std::io::Result<CoordinatorServer> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        Ok(CoordinatorServer {
            state: Arc::new(Mutex::new(state)),
            listener,
            shutdown: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> std::io::Result<std::net::SocketAddr> {
        self.listener.local_addr()
    }

    pub fn shutdown_handle(&self) -> Arc<AtomicBool> {
        self.shutdown.clone()
    }

    /// Accept loop; returns once a Shutdown message flips the flag.
    /// Handler threads notice the flag via their read timeouts and wind
    /// down on their own; they are not joined here.
    pub fn serve(&self) {
        info!(
            "coordinator listening on {}",
            self.local_addr().map(|a| a.to_string()).unwrap_or_default()
        );
        while !self.shutdown.load(Ordering::Relaxed) {
            match self.listener.accept() {
                Ok((stream, peer)) => {
                    debug!("connection from {peer}");
                    let state = self.state.clone();
                    let shutdown = self.shutdown.clone();
                    std::thread::spawn(move || {
                        if let Err(e) = handle_connection(stream, state, shutdown) {
                            debug!("connection from {peer} ended: {e}");
                        }
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(e) => {
                    warn!("accept failed: {e}");
                    std::thread::sleep(Duration::from_millis(50));
                }
            }
        }
    }
}

fn error_reply(e: &CoordinatorError) -> Message {
    Message::Error {
        code: e.code().to_string(),
        message: e.to_string(),
    }
}

fn handle_connection(
    mut stream: TcpStream,
    state: Arc<Mutex<CoordinatorState>>,
    shutdown: Arc<AtomicBool>,
) -> Result<(), CodecError> {
    stream.set_nodelay(true)?;
    // The timeout only fires between frames (requests are written as whole
    // small frames), so it is safe to retry; it exists so idle handlers
    // notice shutdown.
    stream.set_read_timeout(Some(Duration::from_millis(200)))?;
    loop {
        if shutdown.load(Ordering::Relaxed) {
            return Ok(());
        }
        let msg = match read_message(&mut stream) {
            Ok(m) => m,
            Err(CodecError::ConnectionClosed) => return Ok(()),
            Err(CodecError::Io(e))
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                continue;
            }
            Err(e) => return Err(e),
        };
        let reply = match msg {
            Message::Register {
                worker_id,
                address,
                slots_total,
                max_suspended,
            } => {
                let mut st = state.lock().unwrap();
                st.register_worker(worker_id, address, slots_total, max_suspended);
                Message::RegisterOk
            }
            Message::Heartbeat(hb) => {
                let mut st = state.lock().unwrap();
                match st.handle_heartbeat(&hb) {
                    Ok(cmds) => Message::Commands(cmds),
                    Err(e) => error_reply(&e),
                }
            }
            Message::SubmitTask {
                descriptor,
                priority,
                target_worker,
            } => {
                let mut st = state.lock().unwrap();
                match st.submit_task(descriptor, priority, target_worker) {
                    Ok(task_id) => Message::SubmitOk { task_id },
                    Err(e) => error_reply(&e),
                }
            }
            Message::RequestPreemption { task_id, primitive } => {
                let mut st = state.lock().unwrap();
                match st.request_preemption(&task_id, primitive) {
                    Ok(()) => Message::Ack,
                    Err(e) => error_reply(&e),
                }
            }
            Message::RequestResume { task_id } => {
                let mut st = state.lock().unwrap();
                match st.request_resume(&task_id) {
                    Ok(()) => Message::Ack,
                    Err(e) => error_reply(&e),
                }
            }
            Message::RestartTask { task_id } => {
                let mut st = state.lock().unwrap();
                match st.restart_task(&task_id) {
                    Ok(_) => Message::Ack,
                    Err(e) => error_reply(&e),
                }
            }
            Message::SnapshotRequest => {
                let st = state.lock().unwrap();
                let (tasks, workers) = st.snapshot();
                Message::Snapshot { tasks, workers }
            }
            Message::Subscribe => {
                let rx = state.lock().unwrap().subscribe();
                write_message(&mut stream, &Message::Ack)?;
                // Push-only from here on.
                loop {
                    match rx.recv_timeout(Duration::from_millis(200)) {
                        Ok(event) => write_message(&mut stream, &Message::Event(event))?,
                        Err(std::sync::mpsc::RecvTimeoutError::Timeout) => {
                            if shutdown.load(Ordering::Relaxed) {
                                return Ok(());
                            }
                        }
                        Err(std::sync::mpsc::RecvTimeoutError::Disconnected) => return Ok(()),
                    }
                }
            }
            Message::Shutdown => {
                write_message(&mut stream, &Message::Ack)?;
                info!("shutdown requested");
                shutdown.store(true, Ordering::Relaxed);
                return Ok(());
            }
            other => {
                warn!("unexpected message: {other:?}");
                Message::Error {
                    code: "bad_request".into(),
                    message: format!("unexpected message kind: {other:?}"),
                }
            }
        };
        write_message(&mut stream, &reply)?;
    }
}
