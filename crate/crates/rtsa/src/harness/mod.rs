//! Configuration, reproducible parallel ensemble execution, result
//! persistence, and the hypothesis check runner.
//!
//! A run takes one [`ExperimentConfig`] (parsed from the dotted-key text
//! format) and produces, under the chosen output directory:
//!
//! * `summary.csv` — one row per trajectory (and per engine in paired
//!   mode); deterministic bytes for a given config.
//! * `ensemble.json` — the aggregated [`EnsembleReport`](crate::diagnostics::EnsembleReport)
//!   per engine; deterministic bytes.
//! * `traces/traj_{i}.csv` — optional thinned error traces (truncation
//!   steps are never thinned away); deterministic bytes.
//! * `timings.csv` — per-trajectory wall times; *not* deterministic.
//! * `manifest.json` — provenance: config hash, canonical config, applied
//!   defaults, per-trajectory seeds, timestamps, output inventory. The
//!   timestamps make this the second non-deterministic file.

pub mod check;
pub mod config;
pub mod ensemble;
pub mod output;
pub mod report;

pub use check::{run_hypothesis_checks, HypothesisChecks};
pub use config::{
    load_config, parse_config, AlgorithmChoice, ConfigError, ExperimentConfig, ProblemName,
};
pub use ensemble::{run_ensemble, RunError, RunManifest, RunOptions, RunOutput};
pub use output::{read_summary_csv, write_summary_csv, CsvError, SummaryRow};
pub use report::{render_paired_comparison, render_report, render_rows_summary};
