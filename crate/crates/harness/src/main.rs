use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use log::{info, warn};

use preempt_harness::config::ExperimentConfig;
use preempt_harness::csvio;
use preempt_harness::matrix::{run_experiment_matrix, MatrixSpec};
use preempt_harness::metrics::compute_run_metrics;
use preempt_harness::oracle::{timeline_oracle, OverheadModel};
use preempt_harness::report::render_report;
use preempt_harness::runner::{run_scenario, task_descriptor, BinPaths};
use preempt_harness::sweep::{environment_check, footprint_sweep, HostMemory, SweepSpec};
use preempt_scheduler::{PreemptAction, ScenarioSpec, TriggerRule};

/// Experiment harness for comparing task-preemption primitives.
#[derive(Parser, Debug)]
#[command(name = "harness", version)]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run an experiment (baseline matrix or memory sweep) and write CSVs
    /// and plots.
    Run {
        /// TOML experiment config; omit to use a built-in scale preset.
        #[arg(long, conflicts_with_all = ["desk_scale", "paper_scale"])]
        config: Option<PathBuf>,
        /// Built-in desk-scale preset (small inputs, second-scale tasks).
        #[arg(long)]
        desk_scale: bool,
        /// Built-in paper-scale preset (512 MB inputs, 20 repetitions).
        #[arg(long)]
        paper_scale: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the configured repetition count.
        #[arg(long)]
        reps: Option<u32>,
        /// Explicit binary paths (default: discovered next to this binary).
        #[arg(long)]
        coordinator_bin: Option<PathBuf>,
        #[arg(long)]
        worker_bin: Option<PathBuf>,
        #[arg(long)]
        task_bin: Option<PathBuf>,
    },
    /// Render plots and a summary from an existing CSV dataset.
    Report {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the closed-form timeline prediction for one configuration.
    Oracle {
        /// wait | kill_restart | suspend_resume
        #[arg(long)]
        primitive: String,
        #[arg(long)]
        r: f64,
        /// Duration of the low-priority task, seconds.
        #[arg(long)]
        dl: f64,
        /// Duration of the high-priority task, seconds.
        #[arg(long)]
        dh: f64,
        /// Kill cleanup overhead, seconds.
        #[arg(long, default_value_t = 0.0)]
        cleanup: f64,
        /// Suspend/resume paging penalty, seconds.
        #[arg(long, default_value_t = 0.0)]
        page_penalty: f64,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Args::parse().command {
        Cmd::Run {
            config,
            desk_scale,
            paper_scale,
            out,
            reps,
            coordinator_bin,
            worker_bin,
            task_bin,
        } => {
            let mut cfg = match (config, desk_scale, paper_scale) {
                (Some(path), _, _) => ExperimentConfig::load(&path)?,
                (None, _, true) => ExperimentConfig::paper_scale(),
                (None, _, _) => ExperimentConfig::desk_scale(),
            };
            if let Some(n) = reps {
                cfg.matrix.repetitions = n;
                if let Some(s) = cfg.sweep.as_mut() {
                    s.repetitions = n;
                }
            }
            cfg.validate()?;

            let bins = match (coordinator_bin, worker_bin, task_bin) {
                (Some(c), Some(w), Some(t)) => BinPaths {
                    coordinator: c,
                    worker: w,
                    task: t,
                },
                (None, None, None) => BinPaths::discover()
                    .context("run `cargo build --workspace` or pass --coordinator-bin/--worker-bin/--task-bin")?,
                _ => bail!("pass all three of --coordinator-bin, --worker-bin and --task-bin or none"),
            };
            bins.validate()?;
            run_command(&cfg, &bins, &out)
        }
        Cmd::Report { csv, out } => {
            let outputs = render_report(&csv, &out)?;
            for o in outputs {
                println!("wrote {o}");
            }
            Ok(())
        }
        Cmd::Oracle {
            primitive,
            r,
            dl,
            dh,
            cleanup,
            page_penalty,
        } => {
            let action = PreemptAction::parse(&primitive)
                .with_context(|| format!("unknown primitive {primitive}"))?;
            let model = OverheadModel {
                cleanup_s: cleanup,
                page_penalty_s: page_penalty,
            };
            let p = timeline_oracle(action, r, dl, dh, &model)?;
            println!("primitive={} r={r} dl={dl}s dh={dh}s", action.as_str());
            println!("sojourn_s={:.3}", p.sojourn_s);
            println!("makespan_s={:.3}", p.makespan_s);
            Ok(())
        }
    }
}

fn write_environment_notes(out: &Path) -> anyhow::Result<()> {
    let host = HostMemory::probe();
    let mut text = String::new();
    text.push_str(&format!(
        "mem_total_bytes={}\nswap_total_bytes={}\nper_process_swap_accounting={}\n",
        host.mem_total_bytes, host.swap_total_bytes, host.per_process_swap_accounting
    ));
    match host.swappiness {
        Some(v) => {
            text.push_str(&format!("swappiness={v}\n"));
            if v != 0 {
                warn!("vm.swappiness is {v}; the documented setup for swap experiments uses 0 (runtime memory over file cache). Not changing it.");
                text.push_str("# note: swap experiments are documented with swappiness=0\n");
            }
        }
        None => text.push_str("swappiness=unavailable\n"),
    }
    std::fs::write(out.join("environment.txt"), text)?;
    Ok(())
}

fn run_command(cfg: &ExperimentConfig, bins: &BinPaths, out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    write_environment_notes(out)?;

    // Inputs are generated once per experiment; the tasks only read them.
    let inputs_dir = out.join("inputs");
    std::fs::create_dir_all(&inputs_dir)?;
    let input_low = inputs_dir.join("low.bin");
    let input_high = inputs_dir.join("high.bin");
    for (path, bytes, seed) in [
        (&input_low, cfg.input.bytes, cfg.input.seed),
        (&input_high, cfg.input.high_bytes(), cfg.input.seed + 1),
    ] {
        if !path.exists() {
            info!("generating {} ({bytes} bytes)", path.display());
            preempt_task::generate_input(path, bytes, cfg.input.tuple_bytes, seed)?;
        }
    }

    match cfg.mode.as_str() {
        "baseline" => run_baseline(cfg, bins, out, &input_low, &input_high),
        "sweep" => run_sweep(cfg, bins, out, &input_low, &input_high),
        other => bail!("unknown mode {other}"),
    }
}

fn scenario_for(
    cfg: &ExperimentConfig,
    bins: &BinPaths,
    primitive: PreemptAction,
    r: f64,
    input_low: &Path,
    input_high: &Path,
    ballast_low: u64,
    ballast_high: u64,
) -> ScenarioSpec {
    ScenarioSpec {
        low: task_descriptor(cfg, &bins.task, "tl", input_low, cfg.input.bytes, ballast_low),
        high: task_descriptor(
            cfg,
            &bins.task,
            "th",
            input_high,
            cfg.input.high_bytes(),
            ballast_high,
        ),
        trigger: TriggerRule::for_action(primitive, r),
        timeout_ms: cfg.matrix.run_timeout_s * 1000,
    }
}

fn run_baseline(
    cfg: &ExperimentConfig,
    bins: &BinPaths,
    out: &Path,
    input_low: &Path,
    input_high: &Path,
) -> anyhow::Result<()> {
    let spec = MatrixSpec {
        primitives: cfg
            .matrix
            .primitives
            .iter()
            .map(|p| PreemptAction::parse(p).expect("validated"))
            .collect(),
        r_values: cfg.matrix.r_values.clone(),
        repetitions: cfg.matrix.repetitions,
        retry_limit: cfg.matrix.retry_limit,
    };
    let total_tuples = cfg.total_tuples();
    let runs_dir = out.join("runs");
    let mut executor = |primitive: PreemptAction, r: f64, rep: u32| {
        let scenario = scenario_for(
            cfg,
            bins,
            primitive,
            r,
            input_low,
            input_high,
            cfg.task.ballast_low_bytes,
            cfg.task.ballast_high_bytes,
        );
        let run_dir = runs_dir.join(format!("{}-r{:02}-rep{rep}", primitive.as_str(), (r * 100.0) as u32));
        let artifacts = run_scenario(bins, cfg, &scenario, &run_dir).map_err(|e| e.to_string())?;
        compute_run_metrics(primitive, r, rep, &artifacts.outcome, &artifacts.worker_log, total_tuples)
            .map_err(|e| e.to_string())
    };

    let data = run_experiment_matrix(&spec, &mut executor)?;
    let runs_csv = out.join("runs.csv");
    csvio::write_runs(&runs_csv, &data.runs)?;
    csvio::write_aggregates(&out.join("aggregates.csv"), &data.aggregates)?;
    info!("wrote {} runs and {} aggregates", data.runs.len(), data.aggregates.len());

    for o in render_report(&runs_csv, out)? {
        println!("wrote {o}");
    }
    println!("wrote {}", runs_csv.display());
    println!("wrote {}", out.join("aggregates.csv").display());
    Ok(())
}

fn run_sweep(
    cfg: &ExperimentConfig,
    bins: &BinPaths,
    out: &Path,
    input_low: &Path,
    input_high: &Path,
) -> anyhow::Result<()> {
    let sc = cfg.sweep.as_ref().expect("validated");
    let spec = SweepSpec {
        low_ballast_bytes: sc.low_ballast_bytes,
        high_ballast_bytes: sc.high_ballast_bytes.clone(),
        r: sc.r,
        repetitions: sc.repetitions,
        declared_memory_budget_bytes: sc.declared_memory_budget_bytes,
    };
    let host = HostMemory::probe();
    if let Err(reason) = environment_check(&spec, &host) {
        // Skipped, not failed: the sweep needs a machine built for it.
        println!("SWEEP SKIPPED: environment unsupported: {reason}");
        std::fs::write(out.join("sweep-skipped.txt"), format!("{reason}\n"))?;
        return Ok(());
    }

    let total_tuples = cfg.total_tuples();
    let runs_dir = out.join("runs");
    let mut executor = |primitive: PreemptAction, high_ballast: u64, rep: u32| {
        let scenario = scenario_for(
            cfg,
            bins,
            primitive,
            spec.r,
            input_low,
            input_high,
            spec.low_ballast_bytes,
            high_ballast,
        );
        let run_dir = runs_dir.join(format!(
            "sweep-{}-b{}-rep{rep}",
            primitive.as_str(),
            high_ballast >> 20
        ));
        let artifacts = run_scenario(bins, cfg, &scenario, &run_dir).map_err(|e| e.to_string())?;
        compute_run_metrics(primitive, spec.r, rep, &artifacts.outcome, &artifacts.worker_log, total_tuples)
            .map_err(|e| e.to_string())
    };

    let data = footprint_sweep(&spec, &mut executor)?;
    let sweep_csv = out.join("sweep.csv");
    csvio::write_rows(&sweep_csv, &data.rows)?;
    println!(
        "sweep analysis: monotone={} rho_sojourn={:?} rho_makespan={:?} worst sojourn degr {:.1}% worst makespan degr {:.1}%",
        data.analysis.swapped_non_decreasing,
        data.analysis.rho_sojourn,
        data.analysis.rho_makespan,
        data.analysis.worst_sojourn_degradation_pct,
        data.analysis.worst_makespan_degradation_pct
    );
    for o in render_report(&sweep_csv, out)? {
        println!("wrote {o}");
    }
    println!("wrote {}", sweep_csv.display());
    Ok(())
}
