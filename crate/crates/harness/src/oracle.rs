//! Closed-form timeline oracle: the sojourn time and makespan each
//! primitive should produce for given task durations, assuming ideal
//! scheduling. Measured runs are checked against it within a tolerance
//! that absorbs heartbeat granularity and scheduling jitter.

use preempt_scheduler::PreemptAction;
use thiserror::Error;

/// Fixed overhead knobs; both zero for light tasks.
#[derive(Debug, Clone, Copy, Default)]
pub struct OverheadModel {
    /// Kill-side cleanup cost, seconds.
    pub cleanup_s: f64,
    /// Page-out/page-in penalty for suspend/resume, seconds.
    pub page_penalty_s: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("r {0} outside (0,1)")]
    BadThreshold(f64),
    #[error("duration {0} must be positive")]
    BadDuration(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimelinePrediction {
    pub sojourn_s: f64,
    pub makespan_s: f64,
}

/// Expected `(sojourn of t_h, makespan)` in seconds.
///
/// - wait: t_h waits out t_l's remaining `(1-r)` fraction, then runs;
///   nothing is redone, so the makespan is just the two durations.
/// - kill: t_h starts right away (plus cleanup); t_l's first `r` fraction
///   is wasted and the whole task reruns after t_h.
/// - suspend/resume: t_h starts right away; t_l continues where it
///   stopped, so only the paging penalty is added.
pub fn timeline_oracle(
    primitive: PreemptAction,
    r: f64,
    duration_low_s: f64,
    duration_high_s: f64,
    overhead: &OverheadModel,
) -> Result<TimelinePrediction, OracleError> {
    if !(r.is_finite() && 0.0 < r && r < 1.0) {
        return Err(OracleError::BadThreshold(r));
    }
    for d in [duration_low_s, duration_high_s] {
        if !(d.is_finite() && d > 0.0) {
            return Err(OracleError::BadDuration(d));
        }
    }
    let (d_l, d_h) = (duration_low_s, duration_high_s);
    let p = match primitive {
        PreemptAction::Wait => TimelinePrediction {
            sojourn_s: (1.0 - r) * d_l + d_h,
            makespan_s: d_l + d_h,
        },
        PreemptAction::KillRestart => TimelinePrediction {
            sojourn_s: d_h + overhead.cleanup_s,
            makespan_s: r * d_l + d_h + d_l + overhead.cleanup_s,
        },
        PreemptAction::SuspendResume => TimelinePrediction {
            sojourn_s: d_h + overhead.page_penalty_s,
            makespan_s: d_l + d_h + overhead.page_penalty_s,
        },
    };
    Ok(p)
}
