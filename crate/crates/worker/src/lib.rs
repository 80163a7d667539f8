//! Per-machine worker agent (Unix only): launches synthetic task processes
//! in their own process groups, implements suspend/resume/kill with POSIX
//! job-control signals, tracks progress and memory statistics, and
//! heartbeats the coordinator.

#![cfg(unix)]

pub mod agent;
pub mod eventlog;
pub mod heartbeat;
pub mod local;
pub mod procinfo;
pub mod supervisor;

pub use agent::{WorkerAgent, WorkerConfig, WorkerError};
pub use local::{LocalTask, TaskCommand, TaskSummary};
pub use procinfo::{process_state, sample_memory, swap_accounting_supported, ProcMem};
