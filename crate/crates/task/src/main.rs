use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use preempt_task::run::{run_task, RunError, TaskConfig};

/// Synthetic mapper: parses a generated input file, reports progress on
/// stdout and optionally carries a dirtied memory ballast.
#[derive(Parser, Debug)]
#[command(name = "synthetic-task", version)]
struct Args {
    /// Input file produced by the input generator.
    #[arg(long)]
    input: PathBuf,

    /// Fixed tuple width in bytes.
    #[arg(long)]
    tuple_bytes: u64,

    /// Emit a progress record every this many tuples.
    #[arg(long)]
    progress_interval: u64,

    /// Memory to allocate and dirty at startup.
    #[arg(long, default_value_t = 0)]
    ballast_bytes: u64,

    /// Re-read the ballast at finalization and verify its checksum.
    #[arg(long, default_value_t = false)]
    verify_ballast: bool,

    /// Checksum passes per tuple (CPU cost knob).
    #[arg(long, default_value_t = 1)]
    work_factor: u32,

    /// Directory for per-chunk output files.
    #[arg(long)]
    output_dir: Option<PathBuf>,

    /// Seed for the ballast fill pattern.
    #[arg(long, default_value_t = 0x5eed)]
    ballast_seed: u64,
}

#[cfg(unix)]
fn main() -> ExitCode {
    let args = Args::parse();
    preempt_task::signals::install_job_control_handlers();

    let cfg = TaskConfig {
        input: args.input,
        tuple_bytes: args.tuple_bytes,
        progress_interval: args.progress_interval,
        ballast_bytes: args.ballast_bytes,
        verify_ballast: args.verify_ballast,
        work_factor: args.work_factor,
        output_dir: args.output_dir,
        ballast_seed: args.ballast_seed,
    };

    let mut out = preempt_task::run::RawStdout;
    match run_task(&cfg, &mut out) {
        Ok(outcome) if outcome.ballast_ok => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("synthetic-task: ballast checksum mismatch");
            ExitCode::from(3)
        }
        Err(e @ RunError::Parse { .. }) => {
            eprintln!("synthetic-task: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("synthetic-task: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(not(unix))]
fn main() -> ExitCode {
    eprintln!("synthetic-task requires a Unix platform (POSIX job control)");
    ExitCode::from(2)
}
