//! Memory-footprint sweep: fix t_l's ballast, vary t_h's, and measure how
//! per-process swap of the suspended task correlates with the degradation
//! of suspend/resume against the kill and wait baselines.
//!
//! The sweep only runs on a machine with a real memory cap and per-process
//! swap accounting; anywhere else it reports `EnvironmentUnsupported`
//! instead of producing meaningless zeros.

use log::info;
use preempt_scheduler::PreemptAction;
use thiserror::Error;

use crate::csvio::SweepRow;
use crate::metrics::RunMetrics;
use crate::stats::{non_decreasing, spearman};

/// Reference points reported by the worst-case analysis: at the most
/// constrained point the suspend primitive measured ~20% higher sojourn
/// than kill and ~12% higher makespan than wait. Absolute paging costs are
/// hardware-dependent, so these are compared in the report, not asserted.
pub const REFERENCE_SOJOURN_DEGRADATION_PCT: f64 = 20.0;
pub const REFERENCE_MAKESPAN_DEGRADATION_PCT: f64 = 12.0;

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub low_ballast_bytes: u64,
    pub high_ballast_bytes: Vec<u64>,
    pub r: f64,
    pub repetitions: u32,
    /// Memory cap the operator promises the machine enforces.
    pub declared_memory_budget_bytes: u64,
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("environment unsupported: {0}")]
    EnvironmentUnsupported(String),
    #[error("sweep point failed: {0}")]
    PointFailed(String),
    #[error("monotonicity violated: swapped bytes decreased along the ballast grid: {0:?}")]
    NotMonotone(Vec<f64>),
    #[error("rank correlation too weak: sojourn rho {sojourn:?}, makespan rho {makespan:?} (need >= 0.9)")]
    WeakCorrelation {
        sojourn: Option<f64>,
        makespan: Option<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct SweepAnalysis {
    pub swapped_non_decreasing: bool,
    pub rho_sojourn: Option<f64>,
    pub rho_makespan: Option<f64>,
    pub worst_sojourn_degradation_pct: f64,
    pub worst_makespan_degradation_pct: f64,
}

#[derive(Debug, Clone)]
pub struct SweepData {
    pub rows: Vec<SweepRow>,
    pub analysis: SweepAnalysis,
}

/// Host-environment facts the gate needs.
#[derive(Debug, Clone)]
pub struct HostMemory {
    pub mem_total_bytes: u64,
    pub swap_total_bytes: u64,
    pub per_process_swap_accounting: bool,
    pub swappiness: Option<u64>,
}

impl HostMemory {
    #[cfg(target_os = "linux")]
    pub fn probe() -> HostMemory {
        let meminfo = std::fs::read_to_string("/proc/meminfo").unwrap_or_default();
        let field = |name: &str| -> u64 {
            meminfo
                .lines()
                .find_map(|l| l.strip_prefix(name))
                .and_then(|rest| {
                    rest.trim_start_matches(':')
                        .trim()
                        .trim_end_matches("kB")
                        .trim()
                        .parse::<u64>()
                        .ok()
                })
                .map(|kb| kb * 1024)
                .unwrap_or(0)
        };
        let status = std::fs::read_to_string("/proc/self/status").unwrap_or_default();
        HostMemory {
            mem_total_bytes: field("MemTotal"),
            swap_total_bytes: field("SwapTotal"),
            per_process_swap_accounting: status.lines().any(|l| l.starts_with("VmSwap:")),
            swappiness: std::fs::read_to_string("/proc/sys/vm/swappiness")
                .ok()
                .and_then(|s| s.trim().parse().ok()),
        }
    }

    #[cfg(not(target_os = "linux"))]
    pub fn probe() -> HostMemory {
        HostMemory {
            mem_total_bytes: 0,
            swap_total_bytes: 0,
            per_process_swap_accounting: false,
            swappiness: None,
        }
    }
}

/// The gate: per-process swap accounting, actual swap space, a machine
/// whose RAM matches the declared cap, and ballasts big enough that the
/// two tasks together overflow it.
pub fn environment_check(spec: &SweepSpec, host: &HostMemory) -> Result<(), String> {
    if !host.per_process_swap_accounting {
        return Err("kernel exposes no per-process swap counter (no VmSwap in /proc/<pid>/status)".into());
    }
    if host.swap_total_bytes == 0 {
        return Err("no swap space configured (SwapTotal = 0)".into());
    }
    if host.mem_total_bytes > spec.declared_memory_budget_bytes.saturating_mul(5) / 4 {
        return Err(format!(
            "machine has {} bytes of RAM but the config declares a {} byte cap; \
             run inside a VM or cgroup that actually enforces it",
            host.mem_total_bytes, spec.declared_memory_budget_bytes
        ));
    }
    let max_high = spec.high_ballast_bytes.iter().copied().max().unwrap_or(0);
    if spec.low_ballast_bytes + max_high <= spec.declared_memory_budget_bytes {
        return Err(format!(
            "combined ballasts ({} + {}) never exceed the declared cap {}; nothing would page",
            spec.low_ballast_bytes, max_high, spec.declared_memory_budget_bytes
        ));
    }
    Ok(())
}

/// Runs one (primitive, high-ballast, repetition) measurement.
pub trait SweepExecutor {
    fn run_point(
        &mut self,
        primitive: PreemptAction,
        high_ballast_bytes: u64,
        rep: u32,
    ) -> Result<RunMetrics, String>;
}

impl<F> SweepExecutor for F
where
    F: FnMut(PreemptAction, u64, u32) -> Result<RunMetrics, String>,
{
    fn run_point(
        &mut self,
        primitive: PreemptAction,
        high_ballast_bytes: u64,
        rep: u32,
    ) -> Result<RunMetrics, String> {
        self(primitive, high_ballast_bytes, rep)
    }
}

/// The sweep proper. `environment_check` must have passed (or be stubbed by
/// a test); each grid point measures suspend against the kill and wait
/// baselines at the same ballast.
pub fn footprint_sweep(
    spec: &SweepSpec,
    executor: &mut dyn SweepExecutor,
) -> Result<SweepData, SweepError> {
    let mut rows = Vec::new();
    for &ballast in &spec.high_ballast_bytes {
        for rep in 0..spec.repetitions {
            let suspend = executor
                .run_point(PreemptAction::SuspendResume, ballast, rep)
                .map_err(SweepError::PointFailed)?;
            let kill = executor
                .run_point(PreemptAction::KillRestart, ballast, rep)
                .map_err(SweepError::PointFailed)?;
            let wait = executor
                .run_point(PreemptAction::Wait, ballast, rep)
                .map_err(SweepError::PointFailed)?;
            let sojourn_degradation_pct = 100.0
                * (suspend.sojourn_high_ms as f64 - kill.sojourn_high_ms as f64)
                / kill.sojourn_high_ms as f64;
            let makespan_degradation_pct = 100.0
                * (suspend.makespan_ms as f64 - wait.makespan_ms as f64)
                / wait.makespan_ms as f64;
            info!(
                "sweep point ballast={ballast} rep={rep}: swapped={} sojourn_degr={sojourn_degradation_pct:.1}% makespan_degr={makespan_degradation_pct:.1}%",
                suspend.swapped_bytes_low
            );
            rows.push(SweepRow {
                high_ballast_bytes: ballast,
                run_index: rep,
                swapped_bytes_low: suspend.swapped_bytes_low,
                sojourn_suspend_ms: suspend.sojourn_high_ms,
                sojourn_kill_ms: kill.sojourn_high_ms,
                makespan_suspend_ms: suspend.makespan_ms,
                makespan_wait_ms: wait.makespan_ms,
                sojourn_degradation_pct,
                makespan_degradation_pct,
            });
        }
    }

    let analysis = analyze(spec, &rows)?;
    Ok(SweepData { rows, analysis })
}

/// Mean per grid point, in grid order.
fn point_means(spec: &SweepSpec, rows: &[SweepRow], f: impl Fn(&SweepRow) -> f64) -> Vec<f64> {
    spec.high_ballast_bytes
        .iter()
        .map(|&b| {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.high_ballast_bytes == b)
                .map(&f)
                .collect();
            vals.iter().sum::<f64>() / vals.len().max(1) as f64
        })
        .collect()
}

pub fn analyze(spec: &SweepSpec, rows: &[SweepRow]) -> Result<SweepAnalysis, SweepError> {
    let swapped = point_means(spec, rows, |r| r.swapped_bytes_low as f64);
    let sojourn_degr = point_means(spec, rows, |r| r.sojourn_degradation_pct);
    let makespan_degr = point_means(spec, rows, |r| r.makespan_degradation_pct);

    // Tolerate 1% of the largest observed swap as measurement noise.
    let slack = swapped.iter().cloned().fold(0.0, f64::max) * 0.01;
    let monotone = non_decreasing(&swapped, slack);
    if !monotone {
        return Err(SweepError::NotMonotone(swapped));
    }

    let rho_sojourn = spearman(&swapped, &sojourn_degr);
    let rho_makespan = spearman(&swapped, &makespan_degr);
    let strong = |rho: Option<f64>| rho.map_or(false, |v| v >= 0.9);
    if !(strong(rho_sojourn) && strong(rho_makespan)) {
        return Err(SweepError::WeakCorrelation {
            sojourn: rho_sojourn,
            makespan: rho_makespan,
        });
    }

    Ok(SweepAnalysis {
        swapped_non_decreasing: monotone,
        rho_sojourn,
        rho_makespan,
        worst_sojourn_degradation_pct: sojourn_degr.iter().cloned().fold(f64::MIN, f64::max),
        worst_makespan_degradation_pct: makespan_degr.iter().cloned().fold(f64::MIN, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(points: usize) -> SweepSpec {
        SweepSpec {
            low_ballast_bytes: 2560 << 20,
            high_ballast_bytes: (0..points).map(|i| (512 + 512 * i as u64) << 20).collect(),
            r: 0.5,
            repetitions: 1,
            declared_memory_budget_bytes: 4 << 30,
        }
    }

    fn fake_metrics(primitive: PreemptAction, swapped: u64, overhead_ms: u64) -> RunMetrics {
        let (sojourn, makespan) = match primitive {
            PreemptAction::SuspendResume => (10_000 + overhead_ms, 20_000 + overhead_ms),
            PreemptAction::KillRestart => (10_000, 25_000),
            PreemptAction::Wait => (15_000, 20_000),
        };
        RunMetrics {
            primitive: primitive.as_str().into(),
            r: 0.5,
            run_index: 0,
            sojourn_high_ms: sojourn,
            makespan_ms: makespan,
            swapped_bytes_low: if primitive == PreemptAction::SuspendResume {
                swapped
            } else {
                0
            },
            tuples_total_low: 4096,
            trigger_progress: 0.5,
            attempts_low: 1,
            submit_low_ms: 0,
            trigger_instant_ms: 0,
            first_launch_low_ms: 0,
            completion_low_ms: makespan,
            first_launch_high_ms: 0,
            completion_high_ms: sojourn,
        }
    }

    #[test]
    fn sweep_correlates_swap_with_degradation() {
        let spec = spec(4);
        // Paging grows with ballast, overhead grows with paging.
        let mut exec = |p: PreemptAction, ballast: u64, _rep: u32| {
            let swapped = (ballast / 4).max(1);
            let overhead = (swapped / (1 << 20)) as u64 * 10;
            Ok(fake_metrics(p, swapped, overhead))
        };
        let data = footprint_sweep(&spec, &mut exec).unwrap();
        assert_eq!(data.rows.len(), 4);
        assert!(data.analysis.swapped_non_decreasing);
        assert!(data.analysis.rho_sojourn.unwrap() >= 0.9);
        assert!(data.analysis.rho_makespan.unwrap() >= 0.9);
        assert!(data.analysis.worst_sojourn_degradation_pct > 0.0);
    }

    #[test]
    fn decreasing_swap_fails_monotonicity() {
        let spec = spec(3);
        let mut exec = |p: PreemptAction, ballast: u64, _rep: u32| {
            let swapped = (8 << 30) / ballast; // decreasing
            Ok(fake_metrics(p, swapped, 100))
        };
        let err = footprint_sweep(&spec, &mut exec).unwrap_err();
        assert!(matches!(err, SweepError::NotMonotone(_)));
    }

    #[test]
    fn anti_correlated_degradation_fails() {
        let spec = spec(4);
        let mut exec = |p: PreemptAction, ballast: u64, _rep: u32| {
            let swapped = ballast / 4;
            // Overhead shrinks while swap grows: correlation broken.
            let overhead = 10_000u64.saturating_sub((swapped / (1 << 20)) * 10);
            Ok(fake_metrics(p, swapped, overhead))
        };
        let err = footprint_sweep(&spec, &mut exec).unwrap_err();
        assert!(matches!(err, SweepError::WeakCorrelation { .. }));
    }

    #[test]
    fn gate_rejects_this_kind_of_host() {
        let spec = spec(4);
        let uncapped = HostMemory {
            mem_total_bytes: 64 << 30,
            swap_total_bytes: 8 << 30,
            per_process_swap_accounting: true,
            swappiness: Some(0),
        };
        assert!(environment_check(&spec, &uncapped).is_err());

        let no_swap = HostMemory {
            mem_total_bytes: 4 << 30,
            swap_total_bytes: 0,
            per_process_swap_accounting: true,
            swappiness: Some(0),
        };
        assert!(environment_check(&spec, &no_swap).is_err());

        let no_accounting = HostMemory {
            mem_total_bytes: 4 << 30,
            swap_total_bytes: 8 << 30,
            per_process_swap_accounting: false,
            swappiness: Some(0),
        };
        assert!(environment_check(&spec, &no_accounting).is_err());

        let good = HostMemory {
            mem_total_bytes: 4 << 30,
            swap_total_bytes: 8 << 30,
            per_process_swap_accounting: true,
            swappiness: Some(0),
        };
        environment_check(&spec, &good).unwrap();
    }

    #[test]
    fn gate_rejects_ballasts_that_fit_in_budget() {
        let mut s = spec(1);
        s.low_ballast_bytes = 512 << 20;
        s.high_ballast_bytes = vec![512 << 20];
        let good_host = HostMemory {
            mem_total_bytes: 4 << 30,
            swap_total_bytes: 8 << 30,
            per_process_swap_accounting: true,
            swappiness: Some(0),
        };
        assert!(environment_check(&s, &good_host).is_err());
    }
}
