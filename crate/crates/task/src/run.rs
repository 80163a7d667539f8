//! The synthetic mapper: stream the input tuple by tuple, do a fixed amount
//! of checksum work per tuple, report progress on stdout, and write a small
//! output file per chunk.

use std::fs::{self, File};
use std::io::Read;
use std::path::PathBuf;

use thiserror::Error;

use crate::ballast::Ballast;
use crate::gen::{parse_header, MIN_TUPLE_BYTES, TUPLE_HEADER_BYTES};

#[derive(Debug, Clone)]
pub struct TaskConfig {
    pub input: PathBuf,
    pub tuple_bytes: u64,
    /// Emit a progress record (and one chunk output) every this many tuples.
    pub progress_interval: u64,
    pub ballast_bytes: u64,
    pub verify_ballast: bool,
    /// Checksum passes per tuple; the CPU-cost calibration knob.
    pub work_factor: u32,
    pub output_dir: Option<PathBuf>,
    pub ballast_seed: u64,
}

#[derive(Debug)]
pub struct TaskOutcome {
    pub tuples: u64,
    pub ballast_ok: bool,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error at tuple {index}: {reason}")]
    Parse { index: u64, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Destination for the task's output protocol lines
/// (`PROGRESS <fraction>`, `RESUMED`, `SUMMARY ...`).
pub trait ProgressOut {
    fn line(&mut self, line: &str);
}

/// Write-through stdout sink using raw `write(2)`, so there is never a
/// userspace buffer that a stop could strand.
#[cfg(unix)]
pub struct RawStdout;

#[cfg(unix)]
impl ProgressOut for RawStdout {
    fn line(&mut self, line: &str) {
        let mut buf = String::with_capacity(line.len() + 1);
        buf.push_str(line);
        buf.push('\n');
        crate::signals::write_raw(buf.as_bytes());
    }
}

/// Collects lines in memory; used by tests.
#[derive(Default)]
pub struct VecOut(pub Vec<String>);

impl ProgressOut for VecOut {
    fn line(&mut self, line: &str) {
        self.0.push(line.to_string());
    }
}

fn fnv_words(mut acc: u64, data: &[u8]) -> u64 {
    let mut chunks = data.chunks_exact(8);
    for w in &mut chunks {
        acc ^= u64::from_le_bytes(w.try_into().unwrap());
        acc = acc.wrapping_mul(0x0000_0100_0000_01b3);
    }
    for &b in chunks.remainder() {
        acc ^= b as u64;
        acc = acc.wrapping_mul(0x0000_0100_0000_01b3);
    }
    acc
}

/// The per-tuple parsing work: `work_factor` checksum passes over the payload.
pub fn tuple_work(payload: &[u8], work_factor: u32) -> u64 {
    let mut acc = 0xcbf2_9ce4_8422_2325u64;
    for round in 0..work_factor.max(1) as u64 {
        acc = fnv_words(acc ^ round, payload);
    }
    acc
}

pub fn run_task(cfg: &TaskConfig, out: &mut dyn ProgressOut) -> Result<TaskOutcome, RunError> {
    if cfg.tuple_bytes < MIN_TUPLE_BYTES {
        return Err(RunError::Config(format!(
            "tuple_bytes {} below minimum {MIN_TUPLE_BYTES}",
            cfg.tuple_bytes
        )));
    }
    if cfg.progress_interval == 0 {
        return Err(RunError::Config("progress_interval must be > 0".into()));
    }

    // Ballast first: allocated and dirtied at startup, untouched until
    // finalization.
    let ballast = Ballast::allocate(cfg.ballast_bytes, cfg.ballast_seed);

    let mut file = File::open(&cfg.input)?;
    let total_bytes = file.metadata()?.len();
    if total_bytes == 0 {
        return Err(RunError::Config("input file is empty".into()));
    }
    if total_bytes % cfg.tuple_bytes != 0 {
        return Err(RunError::Config(format!(
            "input size {total_bytes} not a multiple of tuple_bytes {}",
            cfg.tuple_bytes
        )));
    }
    let total_tuples = total_bytes / cfg.tuple_bytes;

    if let Some(dir) = &cfg.output_dir {
        fs::create_dir_all(dir)?;
    }

    #[cfg(unix)]
    crate::signals::publish_progress(0, total_tuples);

    let mut tuple = vec![0u8; cfg.tuple_bytes as usize];
    let mut digest = 0u64;
    let mut chunk_first = 0u64;
    for index in 0..total_tuples {
        file.read_exact(&mut tuple)?;
        parse_header(&tuple, index).map_err(|reason| RunError::Parse { index, reason })?;
        digest ^= tuple_work(&tuple[TUPLE_HEADER_BYTES as usize..], cfg.work_factor);

        let done = index + 1;
        #[cfg(unix)]
        crate::signals::publish_progress(done, total_tuples);
        if done % cfg.progress_interval == 0 || done == total_tuples {
            out.line(&format!(
                "PROGRESS {:.6}",
                done as f64 / total_tuples as f64
            ));
            if let Some(dir) = &cfg.output_dir {
                let chunk_no = (done - 1) / cfg.progress_interval;
                fs::write(
                    dir.join(format!("part-{chunk_no:06}")),
                    format!("chunk={chunk_no} tuples={chunk_first}..{done} digest={digest:016x}\n"),
                )?;
            }
            chunk_first = done;
            digest = 0;
        }
    }

    let ballast_ok = if cfg.verify_ballast {
        // Read-back forces any paged-out ballast pages back in.
        ballast.verify()
    } else {
        true
    };

    out.line(&format!(
        "SUMMARY tuples={total_tuples} checksum={}",
        if ballast_ok { "ok" } else { "fail" }
    ));

    Ok(TaskOutcome {
        tuples: total_tuples,
        ballast_ok,
    })
}
