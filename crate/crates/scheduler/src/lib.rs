//! Experiment scheduler: reads a static scenario, launches the low- and
//! high-priority tasks, fires the preemption trigger at the configured
//! completion rate, and recovers the preempted task afterwards. Also hosts
//! the eviction-policy selectors.

pub mod client;
pub mod eviction;
pub mod run;
pub mod trigger;

pub use client::{ClientError, ControlClient, EventStream};
pub use eviction::{select_victim, EvictionError, EvictionPolicy};
pub use run::{run_schedule, ScheduleError, ScheduleOutcome};
pub use trigger::{AfterHigh, PreemptAction, ScenarioSpec, TriggerRule};
