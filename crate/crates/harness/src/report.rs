//! Report rendering: static SVG plots plus a markdown summary from the CSV
//! datasets.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::csvio::{self, AggregateRow, CsvError, CsvKind, SweepRow};
use crate::metrics::{aggregate_cell, RunMetrics};
use crate::plot::{self, Series};
use crate::sweep::{REFERENCE_MAKESPAN_DEGRADATION_PCT, REFERENCE_SOJOURN_DEGRADATION_PCT};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Renders plots and a summary for any of the three dataset kinds.
pub fn render_report(csv_path: &Path, out_dir: &Path) -> Result<Vec<String>, ReportError> {
    std::fs::create_dir_all(out_dir)?;
    match csvio::sniff_kind(csv_path)? {
        CsvKind::Runs => {
            let runs: Vec<RunMetrics> = csvio::read_rows(csv_path)?;
            let aggregates = aggregate_runs(&runs);
            render_baseline(&aggregates, out_dir)
        }
        CsvKind::Aggregates => {
            let aggregates: Vec<AggregateRow> = csvio::read_rows(csv_path)?;
            render_baseline(&aggregates, out_dir)
        }
        CsvKind::Sweep => {
            let rows: Vec<SweepRow> = csvio::read_rows(csv_path)?;
            render_sweep(&rows, out_dir)
        }
    }
}

fn aggregate_runs(runs: &[RunMetrics]) -> Vec<AggregateRow> {
    let mut cells: Vec<(String, f64)> = Vec::new();
    for r in runs {
        let key = (r.primitive.clone(), r.r);
        if !cells.iter().any(|(p, rv)| *p == key.0 && (*rv - key.1).abs() < 1e-9) {
            cells.push(key);
        }
    }
    cells
        .into_iter()
        .filter_map(|(p, r)| aggregate_cell(&p, r, runs).as_ref().map(AggregateRow::from))
        .collect()
}

fn series_for(
    aggregates: &[AggregateRow],
    primitive: &str,
    value: impl Fn(&AggregateRow) -> f64,
) -> Series {
    let mut points: Vec<(f64, f64)> = aggregates
        .iter()
        .filter(|a| a.primitive == primitive)
        .map(|a| (a.r * 100.0, value(a)))
        .collect();
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Series {
        label: primitive.to_string(),
        points,
    }
}

fn render_baseline(aggregates: &[AggregateRow], out_dir: &Path) -> Result<Vec<String>, ReportError> {
    let mut outputs = Vec::new();
    let primitives: Vec<String> = {
        let mut seen = Vec::new();
        for a in aggregates {
            if !seen.contains(&a.primitive) {
                seen.push(a.primitive.clone());
            }
        }
        seen
    };

    let sojourn: Vec<Series> = primitives
        .iter()
        .map(|p| series_for(aggregates, p, |a| a.sojourn_mean_ms / 1000.0))
        .collect();
    let sojourn_path = out_dir.join("sojourn.svg");
    plot::line_chart(
        &sojourn_path,
        "Sojourn time of the high-priority task",
        "preemption point r (% of t_l)",
        "sojourn (s)",
        &sojourn,
    )?;
    outputs.push(sojourn_path.display().to_string());

    let makespan: Vec<Series> = primitives
        .iter()
        .map(|p| series_for(aggregates, p, |a| a.makespan_mean_ms / 1000.0))
        .collect();
    let makespan_path = out_dir.join("makespan.svg");
    plot::line_chart(
        &makespan_path,
        "Makespan of the two-task workload",
        "preemption point r (% of t_l)",
        "makespan (s)",
        &makespan,
    )?;
    outputs.push(makespan_path.display().to_string());

    let mut md = String::new();
    let _ = writeln!(md, "# Baseline comparison\n");
    if aggregates.is_empty() {
        let _ = writeln!(md, "**Warning: empty dataset — no rows to report.**");
    } else {
        let _ = writeln!(
            md,
            "| primitive | r | reps | sojourn mean (ms) | sojourn min/max | makespan mean (ms) | makespan min/max | spread ok |"
        );
        let _ = writeln!(md, "|---|---|---|---|---|---|---|---|");
        let mut sorted = aggregates.to_vec();
        sorted.sort_by(|a, b| (a.primitive.clone(), a.r).partial_cmp(&(b.primitive.clone(), b.r)).unwrap());
        for a in &sorted {
            let _ = writeln!(
                md,
                "| {} | {:.2} | {} | {:.0} | {:.0}/{:.0} | {:.0} | {:.0}/{:.0} | {} |",
                a.primitive,
                a.r,
                a.repetitions,
                a.sojourn_mean_ms,
                a.sojourn_min_ms,
                a.sojourn_max_ms,
                a.makespan_mean_ms,
                a.makespan_min_ms,
                a.makespan_max_ms,
                if a.spread_ok { "yes" } else { "no" },
            );
        }
    }
    let md_path = out_dir.join("summary.md");
    std::fs::write(&md_path, md)?;
    outputs.push(md_path.display().to_string());
    Ok(outputs)
}

fn render_sweep(rows: &[SweepRow], out_dir: &Path) -> Result<Vec<String>, ReportError> {
    let mut outputs = Vec::new();

    let mut ballasts: Vec<u64> = rows.iter().map(|r| r.high_ballast_bytes).collect();
    ballasts.sort_unstable();
    ballasts.dedup();
    let mean = |b: u64, f: &dyn Fn(&SweepRow) -> f64| -> f64 {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r.high_ballast_bytes == b)
            .map(f)
            .collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    };
    let mb = |b: u64| b as f64 / (1 << 20) as f64;

    let left = vec![
        Series {
            label: "sojourn degr. vs kill (%)".into(),
            points: ballasts
                .iter()
                .map(|&b| (mb(b), mean(b, &|r| r.sojourn_degradation_pct)))
                .collect(),
        },
        Series {
            label: "makespan degr. vs wait (%)".into(),
            points: ballasts
                .iter()
                .map(|&b| (mb(b), mean(b, &|r| r.makespan_degradation_pct)))
                .collect(),
        },
    ];
    let right = vec![Series {
        label: "swapped (MiB)".into(),
        points: ballasts
            .iter()
            .map(|&b| (mb(b), mean(b, &|r| r.swapped_bytes_low as f64 / (1 << 20) as f64)))
            .collect(),
    }];
    let sweep_path = out_dir.join("sweep.svg");
    plot::dual_axis_chart(
        &sweep_path,
        "Overheads when varying t_h memory",
        "t_h ballast (MiB)",
        "degradation (%)",
        "swapped (MiB)",
        &left,
        &right,
    )?;
    outputs.push(sweep_path.display().to_string());

    let mut md = String::new();
    let _ = writeln!(md, "# Memory footprint sweep\n");
    if rows.is_empty() {
        let _ = writeln!(md, "**Warning: empty dataset — no rows to report.**");
    } else {
        let _ = writeln!(
            md,
            "| t_h ballast (MiB) | swapped (MiB) | sojourn degr. vs kill (%) | makespan degr. vs wait (%) |"
        );
        let _ = writeln!(md, "|---|---|---|---|");
        for &b in &ballasts {
            let _ = writeln!(
                md,
                "| {:.0} | {:.1} | {:.1} | {:.1} |",
                mb(b),
                mean(b, &|r| r.swapped_bytes_low as f64 / (1 << 20) as f64),
                mean(b, &|r| r.sojourn_degradation_pct),
                mean(b, &|r| r.makespan_degradation_pct),
            );
        }
        let worst_s = ballasts
            .iter()
            .map(|&b| mean(b, &|r| r.sojourn_degradation_pct))
            .fold(f64::MIN, f64::max);
        let worst_m = ballasts
            .iter()
            .map(|&b| mean(b, &|r| r.makespan_degradation_pct))
            .fold(f64::MIN, f64::max);
        let _ = writeln!(
            md,
            "\nWorst-case degradation measured here: sojourn {worst_s:.1}% vs kill, makespan {worst_m:.1}% vs wait."
        );
        let _ = writeln!(
            md,
            "Reference points from the original worst-case analysis: ~{REFERENCE_SOJOURN_DEGRADATION_PCT:.0}% \
             sojourn degradation and ~{REFERENCE_MAKESPAN_DEGRADATION_PCT:.0}% makespan degradation. \
             Absolute paging costs are hardware-dependent; this comparison is informational."
        );
    }
    let md_path = out_dir.join("sweep-summary.md");
    std::fs::write(&md_path, md)?;
    outputs.push(md_path.display().to_string());
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csvio::write_runs;

    fn run(primitive: &str, r: f64, idx: u32, sojourn: u64, makespan: u64) -> RunMetrics {
        RunMetrics {
            primitive: primitive.into(),
            r,
            run_index: idx,
            sojourn_high_ms: sojourn,
            makespan_ms: makespan,
            swapped_bytes_low: 0,
            tuples_total_low: 4096,
            trigger_progress: r,
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
    fn baseline_report_renders_two_plots_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("runs.csv");
        let mut runs = Vec::new();
        for (i, p) in ["wait", "kill_restart", "suspend_resume"].iter().enumerate() {
            for r in [0.25, 0.5, 0.75] {
                runs.push(run(p, r, 0, 10_000 + i as u64 * 1000, 25_000));
            }
        }
        write_runs(&csv, &runs).unwrap();
        let outputs = render_report(&csv, dir.path()).unwrap();
        assert_eq!(outputs.len(), 3);
        let sojourn = std::fs::read_to_string(dir.path().join("sojourn.svg")).unwrap();
        assert_eq!(sojourn.matches("<polyline").count(), 3);
        let summary = std::fs::read_to_string(dir.path().join("summary.md")).unwrap();
        assert!(summary.contains("suspend_resume"));
    }

    #[test]
    fn empty_dataset_renders_warning() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("runs.csv");
        write_runs(&csv, &[]).unwrap();
        // An empty rows file has no header; csv sniffing needs one, so
        // write the header explicitly.
        let header = "primitive,r,run_index,sojourn_high_ms,makespan_ms,swapped_bytes_low,tuples_total_low,trigger_progress,attempts_low,submit_low_ms,trigger_instant_ms,first_launch_low_ms,completion_low_ms,first_launch_high_ms,completion_high_ms\n";
        std::fs::write(&csv, header).unwrap();
        render_report(&csv, dir.path()).unwrap();
        let summary = std::fs::read_to_string(dir.path().join("summary.md")).unwrap();
        assert!(summary.contains("Warning"));
    }

    #[test]
    fn sweep_report_renders_dual_axis_plot() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("sweep.csv");
        let rows: Vec<SweepRow> = (1..=4)
            .map(|i| SweepRow {
                high_ballast_bytes: (i * 512) << 20,
                run_index: 0,
                swapped_bytes_low: (i * 100) << 20,
                sojourn_suspend_ms: 10_000 + i * 500,
                sojourn_kill_ms: 10_000,
                makespan_suspend_ms: 20_000 + i * 500,
                makespan_wait_ms: 20_000,
                sojourn_degradation_pct: i as f64 * 5.0,
                makespan_degradation_pct: i as f64 * 3.0,
            })
            .collect();
        crate::csvio::write_rows(&csv, &rows).unwrap();
        let outputs = render_report(&csv, dir.path()).unwrap();
        assert!(outputs.iter().any(|o| o.ends_with("sweep.svg")));
        let svg = std::fs::read_to_string(dir.path().join("sweep.svg")).unwrap();
        assert!(svg.contains("stroke-dasharray"), "right-axis series missing");
        let summary = std::fs::read_to_string(dir.path().join("sweep-summary.md")).unwrap();
        assert!(summary.contains("informational"));
    }
}
