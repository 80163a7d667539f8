//! Central coordinator (the cluster's tracking service): owns the task
//! records and worker registry, applies the task state machine on
//! heartbeats, queues piggybacked preemption commands, and exposes the
//! control API used by the scheduler and the experiment harness.

pub mod server;
pub mod state;

pub use server::CoordinatorServer;
pub use state::{CoordinatorConfig, CoordinatorError, CoordinatorState};
