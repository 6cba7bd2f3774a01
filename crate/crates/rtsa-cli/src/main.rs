//! `rtsa` — run, check, and compare truncated stochastic approximation
//! experiments described by flat config files.
//!
//! Exit codes: 0 success, 1 usage/validation error, 2 runtime failure,
//! 3 hypothesis violation found by `check`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use rtsa::harness::{
    load_config, read_summary_csv, render_paired_comparison, render_report, render_rows_summary,
    run_ensemble, run_hypothesis_checks, RunOptions,
};

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "rtsa",
    version,
    about = "Randomly truncated stochastic approximation experiments",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a config, run the ensemble, and write results.
    Run(RunArgs),
    /// Run the hypothesis checks for the configured problem and schedule.
    Check(CheckArgs),
    /// Re-render an ensemble summary from a stored summary.csv.
    Report(ReportArgs),
    /// Render the paired chen-vs-rm table from a both_paired run.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: run_out).
    #[arg(long, default_value = "run_out")]
    out: PathBuf,
    /// Worker threads; 0 means one per core. Affects speed only.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CheckArgs {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Monte Carlo samples per probe point for the second-moment check.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding summary.csv (or a direct path to the file).
    #[arg(long)]
    dir: PathBuf,
    /// Tolerances to re-evaluate convergence against.
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    tol: Vec<f64>,
}

#[derive(Args)]
struct CompareArgs {
    /// Directory holding summary.csv of a both_paired run.
    #[arg(long)]
    dir: PathBuf,
    /// Convergence tolerance for the comparison.
    #[arg(long, default_value_t = 0.05)]
    tol: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are successful outcomes; everything else is
            // a usage error.
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Check(args) => cmd_check(args),
        Command::Report(args) => cmd_report(args),
        Command::Compare(args) => cmd_compare(args),
    };
    ExitCode::from(code)
}

fn cmd_run(args: RunArgs) -> u8 {
    let mut config = match load_config(&args.config) {
        Ok(c) => c,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_USAGE;
        }
    };
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    for warning in &config.warnings {
        eprintln!("warning: {warning}");
    }
    let opts = RunOptions {
        out_dir: args.out,
        workers: args.workers,
    };
    match run_ensemble(&config, &opts) {
        Ok(output) => {
            for (algo, report) in &output.reports {
                print!("{}", render_report(*algo, report));
            }
            println!(
                "wrote {} under {}",
                output.manifest.outputs.join(", "),
                output.out_dir.display()
            );
            EXIT_OK
        }
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_RUNTIME
        }
    }
}

fn cmd_check(args: CheckArgs) -> u8 {
    let config = match load_config(&args.config) {
        Ok(c) => c,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_USAGE;
        }
    };
    match run_hypothesis_checks(&config, args.samples) {
        Ok(checks) => {
            print!("{}", checks.render_text());
            if checks.passed() {
                EXIT_OK
            } else {
                EXIT_VIOLATION
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_RUNTIME
        }
    }
}

fn summary_path(dir: &PathBuf) -> PathBuf {
    if dir.is_file() {
        dir.clone()
    } else {
        dir.join("summary.csv")
    }
}

fn cmd_report(args: ReportArgs) -> u8 {
    let path = summary_path(&args.dir);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(err) => {
            eprintln!("error: cannot read {}: {err}", path.display());
            return EXIT_USAGE;
        }
    };
    match read_summary_csv(&text) {
        Ok(rows) => {
            print!("{}", render_rows_summary(&rows, &args.tol));
            EXIT_OK
        }
        Err(err) => {
            eprintln!("error: {}: {err}", path.display());
            EXIT_RUNTIME
        }
    }
}

fn cmd_compare(args: CompareArgs) -> u8 {
    let path = summary_path(&args.dir);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(err) => {
            eprintln!("error: cannot read {}: {err}", path.display());
            return EXIT_USAGE;
        }
    };
    let rows = match read_summary_csv(&text) {
        Ok(rows) => rows,
        Err(err) => {
            eprintln!("error: {}: {err}", path.display());
            return EXIT_RUNTIME;
        }
    };
    match render_paired_comparison(&rows, args.tol) {
        Ok(table) => {
            print!("{table}");
            EXIT_OK
        }
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_RUNTIME
        }
    }
}
