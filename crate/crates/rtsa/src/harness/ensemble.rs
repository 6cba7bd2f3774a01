//! Reproducible parallel ensemble execution.
//!
//! Each trajectory owns a counter-based stream derived from
//! `(master_seed, trajectory_index)`, so results depend only on the resolved
//! config — never on the worker count or scheduling order. Workers produce
//! rows that are collected in job order (rayon's indexed collect preserves
//! it) and written once, sorted by `(trajectory_index, algo)`.
//!
//! In `both_paired` mode both engines run with the *same* per-index stream
//! key; since the engines consume identical draw counts per step, the two
//! runs see the same noise realization, enabling paired comparisons.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::config::{AlgorithmChoice, ExperimentConfig};
use super::output::{
    write_summary_csv, write_timings_csv, write_trace_csv, SummaryRow,
};
use crate::diagnostics::{aggregate, stabilization_report, AggregateOptions, EnsembleReport};
use crate::problems::ProblemError;
use crate::rng::derive_trajectory_seed;
use crate::sa_core::{
    run_trajectory, AlgoKind, RecordPolicy, SetupError, Trajectory, TrajectorySettings,
    TrajectoryStatus,
};
use crate::schedules::ScheduleError;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to build worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Setup(#[from] SetupError),
}

/// Execution parameters that are not part of the experiment identity.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Worker threads; 0 means one per available core. Affects speed only.
    pub workers: usize,
}

/// Provenance record for one run. Contains timestamps and wall times, so it
/// is the one output document exempt from byte-identity across reruns.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema: String,
    pub tool_version: String,
    pub config_hash: String,
    pub canonical_config: String,
    pub applied_defaults: Vec<String>,
    pub warnings: Vec<String>,
    pub workers: usize,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub trajectory_seeds: Vec<u64>,
    pub outputs: Vec<String>,
}

/// In-memory results of a run, alongside the files written to `out_dir`.
#[derive(Debug)]
pub struct RunOutput {
    pub out_dir: PathBuf,
    /// One report per algorithm executed, in execution order.
    pub reports: Vec<(AlgoKind, EnsembleReport)>,
    pub rows: Vec<SummaryRow>,
    pub manifest: RunManifest,
}

#[derive(Serialize)]
struct EnsembleDocument<'a> {
    schema: &'a str,
    config_hash: &'a str,
    reports: Vec<AlgoReport<'a>>,
}

#[derive(Serialize)]
struct AlgoReport<'a> {
    algo: &'a str,
    report: &'a EnsembleReport,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn write_file(path: &Path, bytes: &str) -> Result<(), RunError> {
    std::fs::write(path, bytes).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn algos_for(choice: AlgorithmChoice) -> Vec<AlgoKind> {
    match choice {
        AlgorithmChoice::Chen => vec![AlgoKind::Chen],
        AlgorithmChoice::Rm => vec![AlgoKind::Rm],
        AlgorithmChoice::BothPaired => vec![AlgoKind::Chen, AlgoKind::Rm],
    }
}

/// Run the configured ensemble and persist `summary.csv`, `ensemble.json`,
/// `timings.csv`, optional `traces/`, and `manifest.json` under `out_dir`.
pub fn run_ensemble(
    config: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<RunOutput, RunError> {
    let started = now_ms();
    let problem = config.build_problem()?;
    let schedule = config.build_schedule()?;
    let compacts = config.build_compacts()?;
    let algos = algos_for(config.algorithm);

    // Validate the chen starting state once up front instead of per worker.
    if algos.contains(&AlgoKind::Chen) {
        crate::sa_core::ChenState::initial(config.x0.clone(), &compacts)?;
    }

    let workers = if opts.workers == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    } else {
        opts.workers
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;

    let jobs: Vec<(u64, AlgoKind)> = (0..config.n_trajectories)
        .flat_map(|i| algos.iter().map(move |a| (i, *a)))
        .collect();

    let run_one = |&(index, algo): &(u64, AlgoKind)| -> (Trajectory, f64) {
        let seed = derive_trajectory_seed(config.master_seed, index);
        let settings = TrajectorySettings {
            problem: &problem,
            algo,
            schedule: &schedule,
            compacts: &compacts,
            x0: &config.x0,
            n_steps: config.n_steps,
            record_policy: config.record_policy,
            reset_rule: config.reset_rule,
            divergence_threshold: config.divergence_threshold,
            monitor_radii: &config.monitor_radii,
            monitor_window: 0,
        };
        let t0 = Instant::now();
        // The start state was validated above; per-trajectory setup cannot
        // fail after that.
        let traj = run_trajectory(&settings, seed).expect("validated settings");
        (traj, t0.elapsed().as_secs_f64() * 1e3)
    };
    // Indexed parallel collect preserves job order, making the row order
    // (and therefore every output byte) independent of scheduling.
    let results: Vec<(Trajectory, f64)> = pool.install(|| jobs.par_iter().map(run_one).collect());

    let mut rows = Vec::with_capacity(jobs.len());
    let mut timings = Vec::with_capacity(jobs.len());
    for ((index, algo), (traj, wall_ms)) in jobs.iter().zip(&results) {
        let stab = stabilization_report(
            traj.final_state.sigma,
            traj.last_truncation_step,
            traj.n_steps,
            config.stabilization_fraction,
        );
        let primary = traj.monitors.first();
        rows.push(SummaryRow {
            trajectory_index: *index,
            seed: derive_trajectory_seed(config.master_seed, *index),
            algo: *algo,
            status: traj.status,
            final_error: traj.final_error,
            final_sigma: traj.final_state.sigma,
            last_truncation_step: traj.last_truncation_step,
            stabilized: stab.stabilized,
            sup_martingale: primary.map_or(0.0, |m| m.running_sup),
            tail_oscillation: primary.map_or(0.0, |m| m.tail_oscillation),
        });
        timings.push((*index, *algo, *wall_ms));
    }

    // Per-algorithm aggregation, in execution order.
    let agg_opts = AggregateOptions {
        tolerances: config.tolerances.clone(),
        stabilization_fraction: config.stabilization_fraction,
    };
    let mut reports: Vec<(AlgoKind, EnsembleReport)> = Vec::new();
    for algo in &algos {
        let subset: Vec<Trajectory> = jobs
            .iter()
            .zip(&results)
            .filter(|((_, a), _)| a == algo)
            .map(|(_, (t, _))| t.clone())
            .collect();
        reports.push((*algo, aggregate(&subset, &agg_opts)));
    }
    if config.algorithm == AlgorithmChoice::BothPaired {
        let rm_diverged = jobs
            .iter()
            .zip(&results)
            .filter(|((_, a), (t, _))| {
                *a == AlgoKind::Rm && matches!(t.status, TrajectoryStatus::Diverged { .. })
            })
            .count() as f64
            / config.n_trajectories as f64;
        for (algo, report) in reports.iter_mut() {
            if *algo == AlgoKind::Chen {
                report.rm_divergence_fraction = Some(rm_diverged);
            }
        }
    }

    // Persist everything.
    std::fs::create_dir_all(&opts.out_dir).map_err(|source| RunError::Io {
        path: opts.out_dir.display().to_string(),
        source,
    })?;
    let mut outputs = Vec::new();

    let summary_path = opts.out_dir.join("summary.csv");
    write_file(&summary_path, &write_summary_csv(&rows))?;
    outputs.push("summary.csv".to_string());

    let config_hash = config.config_hash();
    let doc = EnsembleDocument {
        schema: "rtsa-ensemble-v1",
        config_hash: &config_hash,
        reports: reports
            .iter()
            .map(|(a, r)| AlgoReport {
                algo: a.as_str(),
                report: r,
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&doc).expect("report serialization") + "\n";
    write_file(&opts.out_dir.join("ensemble.json"), &json)?;
    outputs.push("ensemble.json".to_string());

    if config.write_traces && config.record_policy != RecordPolicy::FinalOnly {
        let traces_dir = opts.out_dir.join("traces");
        std::fs::create_dir_all(&traces_dir).map_err(|source| RunError::Io {
            path: traces_dir.display().to_string(),
            source,
        })?;
        for ((index, algo), (traj, _)) in jobs.iter().zip(&results) {
            let name = if algos.len() > 1 {
                format!("traj_{index}_{}.csv", algo.as_str())
            } else {
                format!("traj_{index}.csv")
            };
            write_file(&traces_dir.join(&name), &write_trace_csv(&traj.trace))?;
            outputs.push(format!("traces/{name}"));
        }
    }

    write_file(&opts.out_dir.join("timings.csv"), &write_timings_csv(&timings))?;
    outputs.push("timings.csv".to_string());

    let manifest = RunManifest {
        schema: "rtsa-manifest-v1".to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash,
        canonical_config: config.canonical_string(),
        applied_defaults: config.applied_defaults.clone(),
        warnings: config.warnings.clone(),
        workers,
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        trajectory_seeds: (0..config.n_trajectories)
            .map(|i| derive_trajectory_seed(config.master_seed, i))
            .collect(),
        outputs: {
            let mut o = outputs.clone();
            o.push("manifest.json".to_string());
            o
        },
    };
    let manifest_json =
        serde_json::to_string_pretty(&manifest).expect("manifest serialization") + "\n";
    write_file(&opts.out_dir.join("manifest.json"), &manifest_json)?;

    Ok(RunOutput {
        out_dir: opts.out_dir.clone(),
        reports,
        rows,
        manifest,
    })
}
