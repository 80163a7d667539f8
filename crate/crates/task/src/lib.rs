//! Synthetic mapper used by the preemption experiments: reads and parses a
//! generated input file, reports progress over stdout, and optionally
//! allocates a dirtied memory ballast to emulate stateful, memory-hungry
//! tasks.
//!
//! Output protocol (one record per line on stdout):
//!
//! ```text
//! PROGRESS <fraction>
//! RESUMED
//! SUMMARY tuples=<n> checksum=<ok|fail>
//! ```

pub mod ballast;
pub mod gen;
pub mod run;
#[cfg(unix)]
pub mod signals;

pub use gen::{generate_input, GenError, MIN_TUPLE_BYTES, TUPLE_HEADER_BYTES};
pub use run::{run_task, ProgressOut, RunError, TaskConfig, TaskOutcome, VecOut};
