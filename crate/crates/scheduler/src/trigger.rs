//! Static trigger configuration for the two-task scenario.

use preempt_protocol::TaskLaunchDescriptor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreemptAction {
    SuspendResume,
    KillRestart,
    Wait,
}

impl PreemptAction {
    pub const ALL: [PreemptAction; 3] = [
        PreemptAction::Wait,
        PreemptAction::KillRestart,
        PreemptAction::SuspendResume,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PreemptAction::SuspendResume => "suspend_resume",
            PreemptAction::KillRestart => "kill_restart",
            PreemptAction::Wait => "wait",
        }
    }

    pub fn parse(s: &str) -> Option<PreemptAction> {
        match s {
            "suspend_resume" | "suspend" => Some(PreemptAction::SuspendResume),
            "kill_restart" | "kill" => Some(PreemptAction::KillRestart),
            "wait" => Some(PreemptAction::Wait),
            _ => None,
        }
    }
}

impl std::fmt::Display for PreemptAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfterHigh {
    ResumeLow,
    RestartLow,
    Nothing,
}

/// Watches the low-priority task and fires once its completion rate crosses
/// `threshold_r`. The action/after pairing is fixed by construction: each
/// primitive implies its own recovery step.
#[derive(Debug, Clone)]
pub struct TriggerRule {
    pub threshold_r: f64,
    pub action: PreemptAction,
    pub after_high_completes: AfterHigh,
}

impl TriggerRule {
    /// Canonical rule for a primitive.
    pub fn for_action(action: PreemptAction, threshold_r: f64) -> TriggerRule {
        let after_high_completes = match action {
            PreemptAction::SuspendResume => AfterHigh::ResumeLow,
            PreemptAction::KillRestart => AfterHigh::RestartLow,
            PreemptAction::Wait => AfterHigh::Nothing,
        };
        TriggerRule {
            threshold_r,
            action,
            after_high_completes,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.threshold_r.is_finite() && 0.0 < self.threshold_r && self.threshold_r < 1.0) {
            return Err(format!("threshold_r {} outside (0,1)", self.threshold_r));
        }
        let expected = match self.action {
            PreemptAction::SuspendResume => AfterHigh::ResumeLow,
            PreemptAction::KillRestart => AfterHigh::RestartLow,
            PreemptAction::Wait => AfterHigh::Nothing,
        };
        if self.after_high_completes != expected {
            return Err(format!(
                "{} requires after_high_completes {:?}",
                self.action, expected
            ));
        }
        Ok(())
    }
}

/// Everything one scripted scenario needs.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub low: TaskLaunchDescriptor,
    pub high: TaskLaunchDescriptor,
    pub trigger: TriggerRule,
    /// Hard ceiling on the whole script; a stuck run fails loudly.
    pub timeout_ms: u64,
}
