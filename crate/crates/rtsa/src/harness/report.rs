//! Text rendering of ensemble results, plus the row-level re-aggregation
//! behind the `report` and `compare` subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::output::SummaryRow;
use crate::diagnostics::{wilson_interval, EnsembleReport};
use crate::sa_core::{AlgoKind, TrajectoryStatus};

/// Render one algorithm's ensemble report as the table printed on stdout.
pub fn render_report(algo: AlgoKind, report: &EnsembleReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "ensemble report [{}]", algo.as_str());
    let _ = writeln!(
        out,
        "  trajectories      : {} (completed {}, diverged {}, aborted {})",
        report.n_trajectories, report.n_completed, report.n_diverged, report.n_aborted
    );
    for (tol, frac) in &report.frac_converged {
        let _ = writeln!(
            out,
            "  converged @ {:<8}: {:.4} ({} of {}, Wilson 95% [{:.4}, {:.4}])",
            tol,
            frac.fraction,
            frac.count,
            report.n_trajectories,
            frac.wilson_low,
            frac.wilson_high
        );
    }
    let _ = writeln!(
        out,
        "  median final error: {:.6}",
        report.median_final_error
    );
    let _ = writeln!(
        out,
        "  stabilized        : {:.4} (Wilson 95% [{:.4}, {:.4}])",
        report.frac_stabilized.fraction,
        report.frac_stabilized.wilson_low,
        report.frac_stabilized.wilson_high
    );
    let _ = writeln!(out, "  max sigma         : {}", report.max_sigma);
    let hist: Vec<String> = report
        .sigma_histogram
        .iter()
        .map(|(sigma, count)| format!("{sigma}:{count}"))
        .collect();
    let _ = writeln!(out, "  sigma histogram   : {{{}}}", hist.join(", "));
    for m in &report.martingale {
        let _ = writeln!(
            out,
            "  monitor q={:<7}: sup median {:.4e} max {:.4e} | tail osc median {:.4e} p95 {:.4e} max {:.4e}",
            m.q,
            m.sup_median,
            m.sup_max,
            m.tail_oscillation_median,
            m.tail_oscillation_p95,
            m.tail_oscillation_max
        );
    }
    if let Some(f) = report.rm_divergence_fraction {
        let _ = writeln!(out, "  paired rm diverged: {f:.4}");
    }
    out
}

fn median(sorted: &[f64]) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    sorted[(sorted.len() - 1) / 2]
}

/// Re-render a summary from stored rows. Covers everything the rows carry;
/// monitor columns refer to the primary (first-configured) radius.
pub fn render_rows_summary(rows: &[SummaryRow], tolerances: &[f64]) -> String {
    let mut out = String::new();
    let mut by_algo: BTreeMap<&'static str, Vec<&SummaryRow>> = BTreeMap::new();
    for row in rows {
        by_algo.entry(row.algo.as_str()).or_default().push(row);
    }
    for (algo, rows) in &by_algo {
        let n = rows.len() as u64;
        let completed = rows
            .iter()
            .filter(|r| r.status == TrajectoryStatus::Completed)
            .count() as u64;
        let diverged = rows
            .iter()
            .filter(|r| matches!(r.status, TrajectoryStatus::Diverged { .. }))
            .count() as u64;
        let aborted = n - completed - diverged;
        let _ = writeln!(out, "summary [{algo}] from {n} stored rows");
        let _ = writeln!(
            out,
            "  completed {completed}, diverged {diverged}, aborted {aborted}"
        );
        for &tol in tolerances {
            let k = rows
                .iter()
                .filter(|r| r.status == TrajectoryStatus::Completed && r.final_error <= tol)
                .count() as u64;
            let (lo, hi) = wilson_interval(k, n);
            let _ = writeln!(
                out,
                "  converged @ {:<8}: {:.4} ({k} of {n}, Wilson 95% [{lo:.4}, {hi:.4}])",
                tol,
                k as f64 / n as f64
            );
        }
        let mut errors: Vec<f64> = rows.iter().map(|r| r.final_error).collect();
        errors.sort_by(f64::total_cmp);
        let _ = writeln!(out, "  median final error: {:.6}", median(&errors));
        let stabilized = rows.iter().filter(|r| r.stabilized).count() as u64;
        let _ = writeln!(
            out,
            "  stabilized        : {:.4} ({stabilized} of {n})",
            stabilized as f64 / n as f64
        );
        let mut hist: BTreeMap<u32, u64> = BTreeMap::new();
        let mut max_sigma = 0;
        for r in rows.iter() {
            *hist.entry(r.final_sigma).or_insert(0) += 1;
            max_sigma = max_sigma.max(r.final_sigma);
        }
        let flat: Vec<String> = hist
            .iter()
            .map(|(sigma, count)| format!("{sigma}:{count}"))
            .collect();
        let _ = writeln!(out, "  max sigma         : {max_sigma}");
        let _ = writeln!(out, "  sigma histogram   : {{{}}}", flat.join(", "));
        let mut sups: Vec<f64> = rows.iter().map(|r| r.sup_martingale).collect();
        let mut tails: Vec<f64> = rows.iter().map(|r| r.tail_oscillation).collect();
        sups.sort_by(f64::total_cmp);
        tails.sort_by(f64::total_cmp);
        let _ = writeln!(
            out,
            "  primary monitor   : sup median {:.4e}, tail osc median {:.4e}",
            median(&sups),
            median(&tails)
        );
    }
    out
}

/// Pairing failure for the `compare` subcommand.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct CompareError(String);

/// Side-by-side chen vs rm table for a paired run's rows.
pub fn render_paired_comparison(rows: &[SummaryRow], tol: f64) -> Result<String, CompareError> {
    let mut pairs: BTreeMap<u64, (Option<&SummaryRow>, Option<&SummaryRow>)> = BTreeMap::new();
    for row in rows {
        let slot = pairs.entry(row.trajectory_index).or_insert((None, None));
        match row.algo {
            AlgoKind::Chen => slot.0 = Some(row),
            AlgoKind::Rm => slot.1 = Some(row),
        }
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "paired comparison @ tol {tol} ({} trajectory indices)",
        pairs.len()
    );
    let _ = writeln!(
        out,
        "{:>6} {:>12} {:>14} {:>14} {:>12} {:>12}",
        "index", "seed", "chen_status", "rm_status", "chen_error", "rm_error"
    );
    let mut rm_diverged = 0u64;
    let mut chen_completed = 0u64;
    let mut chen_converged = 0u64;
    let mut chen_converged_given_rm_diverged = 0u64;
    let n = pairs.len() as u64;
    for (index, (chen, rm)) in &pairs {
        let (Some(chen), Some(rm)) = (chen, rm) else {
            return Err(CompareError(format!(
                "trajectory {index} is missing a chen or rm row; not a both_paired run"
            )));
        };
        let rm_div = matches!(rm.status, TrajectoryStatus::Diverged { .. });
        let chen_ok = chen.status == TrajectoryStatus::Completed;
        let chen_conv = chen_ok && chen.final_error <= tol;
        rm_diverged += rm_div as u64;
        chen_completed += chen_ok as u64;
        chen_converged += chen_conv as u64;
        chen_converged_given_rm_diverged += (chen_conv && rm_div) as u64;
        let _ = writeln!(
            out,
            "{:>6} {:>12} {:>14} {:>14} {:>12.4e} {:>12.4e}",
            index,
            chen.seed,
            status_short(chen.status),
            status_short(rm.status),
            chen.final_error,
            rm.final_error
        );
    }
    let _ = writeln!(out, "rm diverged          : {rm_diverged} of {n}");
    let _ = writeln!(out, "chen completed       : {chen_completed} of {n}");
    let _ = writeln!(out, "chen converged @ tol : {chen_converged} of {n}");
    let _ = writeln!(
        out,
        "chen rescued rm blowups: {chen_converged_given_rm_diverged} of {rm_diverged}"
    );
    Ok(out)
}

fn status_short(status: TrajectoryStatus) -> String {
    match status {
        TrajectoryStatus::Completed => "completed".into(),
        TrajectoryStatus::Diverged { at_step } => format!("diverged@{at_step}"),
        TrajectoryStatus::Aborted { at_step } => format!("aborted@{at_step}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(
        index: u64,
        algo: AlgoKind,
        status: TrajectoryStatus,
        final_error: f64,
    ) -> SummaryRow {
        SummaryRow {
            trajectory_index: index,
            seed: index,
            algo,
            status,
            final_error,
            final_sigma: 0,
            last_truncation_step: None,
            stabilized: true,
            sup_martingale: 0.0,
            tail_oscillation: 0.0,
        }
    }

    #[test]
    fn rows_summary_counts_by_algo() {
        let rows = vec![
            row(0, AlgoKind::Chen, TrajectoryStatus::Completed, 0.01),
            row(1, AlgoKind::Chen, TrajectoryStatus::Completed, 0.2),
            row(0, AlgoKind::Rm, TrajectoryStatus::Diverged { at_step: 3 }, 1e9),
        ];
        let text = render_rows_summary(&rows, &[0.05]);
        assert!(text.contains("summary [chen] from 2 stored rows"));
        assert!(text.contains("summary [rm] from 1 stored rows"));
        assert!(text.contains("converged @ 0.05"));
        assert!(text.contains("0.5000 (1 of 2"));
    }

    #[test]
    fn paired_comparison_requires_both_rows() {
        let rows = vec![
            row(0, AlgoKind::Chen, TrajectoryStatus::Completed, 0.01),
            row(0, AlgoKind::Rm, TrajectoryStatus::Diverged { at_step: 4 }, 1e8),
            row(1, AlgoKind::Chen, TrajectoryStatus::Completed, 0.03),
            row(1, AlgoKind::Rm, TrajectoryStatus::Diverged { at_step: 6 }, 1e7),
        ];
        let text = render_paired_comparison(&rows, 0.05).unwrap();
        assert!(text.contains("rm diverged          : 2 of 2"));
        assert!(text.contains("chen rescued rm blowups: 2 of 2"));

        let unpaired = vec![row(0, AlgoKind::Chen, TrajectoryStatus::Completed, 0.01)];
        assert!(render_paired_comparison(&unpaired, 0.05).is_err());
    }
}
