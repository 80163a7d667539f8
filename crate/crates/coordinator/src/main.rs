use std::io::Write;
use std::path::PathBuf;

use clap::Parser;

use preempt_coordinator::{CoordinatorConfig, CoordinatorServer, CoordinatorState};

/// Coordinator service: accepts worker registrations and heartbeats on one
/// TCP port and serves the scheduler/harness control API on the same port.
#[derive(Parser, Debug)]
#[command(name = "coordinator", version)]
struct Args {
    /// Listen address; port 0 picks an ephemeral port (announced on stdout).
    #[arg(long, default_value = "127.0.0.1:0")]
    listen: String,

    /// Expected worker heartbeat interval in milliseconds.
    #[arg(long, default_value_t = 300)]
    heartbeat_ms: u64,

    /// Declare a worker dead after this many missed intervals.
    #[arg(long, default_value_t = 10)]
    dead_after_beats: u32,

    /// Per-task memory cap for the swap-budget admission check.
    #[arg(long, default_value_t = 1 << 30)]
    per_task_cap_bytes: u64,

    /// RAM + swap budget for tasks on one worker.
    #[arg(long, default_value_t = 8 << 30)]
    memory_budget_bytes: u64,

    /// Event log path (one line per state transition).
    #[arg(long)]
    event_log: PathBuf,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();

    let config = CoordinatorConfig {
        heartbeat_interval_ms: args.heartbeat_ms,
        missed_heartbeats_dead: args.dead_after_beats,
        per_task_memory_cap_bytes: args.per_task_cap_bytes,
        memory_budget_bytes: args.memory_budget_bytes,
    };
    let state = CoordinatorState::with_log_file(config, &args.event_log)?;
    let server = CoordinatorServer::bind(state, &args.listen)?;

    // Announce the actual address for harnesses that asked for port 0.
    println!("LISTENING {}", server.local_addr()?);
    std::io::stdout().flush()?;

    server.serve();
    Ok(())
}
