use std::path::PathBuf;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use clap::Parser;

/// Worker agent: runs task processes for the coordinator and implements the
/// suspend/resume/kill preemption primitives via POSIX signals.
#[derive(Parser, Debug)]
#[command(name = "worker", version)]
struct Args {
    /// Coordinator address, host:port.
    #[arg(long)]
    coordinator: String,

    /// Concurrent running-task slots.
    #[arg(long, default_value_t = 1)]
    slots: u32,

    /// Maximum tasks held suspended at once.
    #[arg(long, default_value_t = 1)]
    max_suspended: u32,

    /// Heartbeat interval in milliseconds.
    #[arg(long, default_value_t = 300)]
    heartbeat_ms: u64,

    /// Working directory for task outputs and logs.
    #[arg(long)]
    workdir: PathBuf,

    /// Worker identifier; defaults to worker-<pid>.
    #[arg(long)]
    id: Option<String>,
}

#[cfg(unix)]
fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();

    let config = preempt_worker::WorkerConfig {
        worker_id: preempt_protocol::WorkerId(
            args.id
                .unwrap_or_else(|| format!("worker-{}", std::process::id())),
        ),
        coordinator: args.coordinator,
        slots_total: args.slots,
        max_suspended: args.max_suspended,
        heartbeat_ms: args.heartbeat_ms,
        workdir: args.workdir,
    };

    let (exit_tx, exit_rx) = std::sync::mpsc::channel();
    let agent = Arc::new(preempt_worker::WorkerAgent::new(config, exit_tx)?);
    let shutdown = Arc::new(AtomicBool::new(false));
    preempt_worker::heartbeat::run_heartbeat_loop(agent, exit_rx, shutdown);
    Ok(())
}

#[cfg(not(unix))]
fn main() {
    eprintln!("worker requires a Unix platform (POSIX job control)");
    std::process::exit(2);
}
