//! Versioned file formats for run outputs.
//!
//! All science-bearing outputs (`summary.csv`, trace CSVs, `ensemble.json`)
//! are deterministic functions of the resolved config: floats are printed
//! with Rust's shortest round-trip formatting and rows are emitted in
//! trajectory-index order, so reruns produce byte-identical files no matter
//! how many workers executed them. Wall-clock measurements are quarantined
//! in `timings.csv`, which is exempt from that guarantee.

use std::fmt::Write as _;

use thiserror::Error;

use crate::sa_core::{AlgoKind, TracePoint, TrajectoryStatus};

pub const SUMMARY_SCHEMA: &str = "# rtsa-summary-v1";
pub const SUMMARY_HEADER: &str = "trajectory_index,seed,algo,status,final_error,final_sigma,last_truncation_step,stabilized,sup_martingale,tail_oscillation";
pub const TRACE_SCHEMA: &str = "# rtsa-trace-v1";
pub const TRACE_HEADER: &str = "step,error,sigma,truncated";
pub const TIMINGS_SCHEMA: &str = "# rtsa-timings-v1";
pub const TIMINGS_HEADER: &str = "trajectory_index,algo,wall_time_ms";

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub trajectory_index: u64,
    pub seed: u64,
    pub algo: AlgoKind,
    pub status: TrajectoryStatus,
    pub final_error: f64,
    pub final_sigma: u32,
    pub last_truncation_step: Option<u64>,
    pub stabilized: bool,
    /// `sup_n ‖M̄_n‖` of the primary (first-configured) monitor radius.
    pub sup_martingale: f64,
    /// Tail oscillation of the primary monitor radius.
    pub tail_oscillation: f64,
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("unsupported schema `{found}`, expected `{expected}`")]
    Schema { found: String, expected: String },
}

fn status_token(status: TrajectoryStatus) -> String {
    match status {
        TrajectoryStatus::Completed => "completed".to_string(),
        TrajectoryStatus::Diverged { at_step } => format!("diverged@{at_step}"),
        TrajectoryStatus::Aborted { at_step } => format!("aborted@{at_step}"),
    }
}

fn parse_status(token: &str, line: usize) -> Result<TrajectoryStatus, CsvError> {
    if token == "completed" {
        return Ok(TrajectoryStatus::Completed);
    }
    let bad = || CsvError::Malformed {
        line,
        msg: format!("unknown status `{token}`"),
    };
    if let Some(rest) = token.strip_prefix("diverged@") {
        return rest
            .parse()
            .map(|at_step| TrajectoryStatus::Diverged { at_step })
            .map_err(|_| bad());
    }
    if let Some(rest) = token.strip_prefix("aborted@") {
        return rest
            .parse()
            .map(|at_step| TrajectoryStatus::Aborted { at_step })
            .map_err(|_| bad());
    }
    Err(bad())
}

fn parse_algo(token: &str, line: usize) -> Result<AlgoKind, CsvError> {
    match token {
        "chen" => Ok(AlgoKind::Chen),
        "rm" => Ok(AlgoKind::Rm),
        _ => Err(CsvError::Malformed {
            line,
            msg: format!("unknown algo `{token}`"),
        }),
    }
}

/// Render `summary.csv` bytes.
pub fn write_summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{SUMMARY_SCHEMA}");
    let _ = writeln!(out, "{SUMMARY_HEADER}");
    for r in rows {
        let last = r
            .last_truncation_step
            .map(|s| s.to_string())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.trajectory_index,
            r.seed,
            r.algo.as_str(),
            status_token(r.status),
            r.final_error,
            r.final_sigma,
            last,
            r.stabilized,
            r.sup_martingale,
            r.tail_oscillation,
        );
    }
    out
}

/// Parse `summary.csv` bytes, validating the schema line and header.
pub fn read_summary_csv(text: &str) -> Result<Vec<SummaryRow>, CsvError> {
    let mut lines = text.lines().enumerate();
    let (_, schema) = lines.next().ok_or_else(|| CsvError::Malformed {
        line: 1,
        msg: "empty file".into(),
    })?;
    if schema != SUMMARY_SCHEMA {
        return Err(CsvError::Schema {
            found: schema.to_string(),
            expected: SUMMARY_SCHEMA.to_string(),
        });
    }
    let (_, header) = lines.next().ok_or_else(|| CsvError::Malformed {
        line: 2,
        msg: "missing header".into(),
    })?;
    if header != SUMMARY_HEADER {
        return Err(CsvError::Malformed {
            line: 2,
            msg: format!("unexpected header `{header}`"),
        });
    }
    let mut rows = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 10 {
            return Err(CsvError::Malformed {
                line,
                msg: format!("expected 10 fields, got {}", fields.len()),
            });
        }
        let num = |i: usize, what: &str| -> Result<f64, CsvError> {
            fields[i].parse().map_err(|_| CsvError::Malformed {
                line,
                msg: format!("bad {what} `{}`", fields[i]),
            })
        };
        rows.push(SummaryRow {
            trajectory_index: fields[0].parse().map_err(|_| CsvError::Malformed {
                line,
                msg: format!("bad trajectory_index `{}`", fields[0]),
            })?,
            seed: fields[1].parse().map_err(|_| CsvError::Malformed {
                line,
                msg: format!("bad seed `{}`", fields[1]),
            })?,
            algo: parse_algo(fields[2], line)?,
            status: parse_status(fields[3], line)?,
            final_error: num(4, "final_error")?,
            final_sigma: fields[5].parse().map_err(|_| CsvError::Malformed {
                line,
                msg: format!("bad final_sigma `{}`", fields[5]),
            })?,
            last_truncation_step: if fields[6].is_empty() {
                None
            } else {
                Some(fields[6].parse().map_err(|_| CsvError::Malformed {
                    line,
                    msg: format!("bad last_truncation_step `{}`", fields[6]),
                })?)
            },
            stabilized: match fields[7] {
                "true" => true,
                "false" => false,
                other => {
                    return Err(CsvError::Malformed {
                        line,
                        msg: format!("bad stabilized `{other}`"),
                    })
                }
            },
            sup_martingale: num(8, "sup_martingale")?,
            tail_oscillation: num(9, "tail_oscillation")?,
        });
    }
    Ok(rows)
}

/// Render one trajectory's trace CSV.
pub fn write_trace_csv(trace: &[TracePoint]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{TRACE_SCHEMA}");
    let _ = writeln!(out, "{TRACE_HEADER}");
    for p in trace {
        let _ = writeln!(out, "{},{},{},{}", p.step, p.error, p.sigma, p.truncated);
    }
    out
}

/// Render `timings.csv` (the one deliberately non-deterministic output).
pub fn write_timings_csv(timings: &[(u64, AlgoKind, f64)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{TIMINGS_SCHEMA}");
    let _ = writeln!(out, "{TIMINGS_HEADER}");
    for (idx, algo, ms) in timings {
        let _ = writeln!(out, "{},{},{}", idx, algo.as_str(), ms);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: u64, algo: AlgoKind, status: TrajectoryStatus) -> SummaryRow {
        SummaryRow {
            trajectory_index: i,
            seed: 1000 + i,
            algo,
            status,
            final_error: 0.125,
            final_sigma: 2,
            last_truncation_step: if i % 2 == 0 { Some(3) } else { None },
            stabilized: true,
            sup_martingale: 0.5,
            tail_oscillation: 0.01,
        }
    }

    #[test]
    fn summary_roundtrip() {
        let rows = vec![
            row(0, AlgoKind::Chen, TrajectoryStatus::Completed),
            row(1, AlgoKind::Rm, TrajectoryStatus::Diverged { at_step: 3 }),
            row(2, AlgoKind::Chen, TrajectoryStatus::Aborted { at_step: 9 }),
        ];
        let text = write_summary_csv(&rows);
        let parsed = read_summary_csv(&text).unwrap();
        assert_eq!(parsed, rows);
    }

    #[test]
    fn summary_rejects_foreign_schema() {
        let err = read_summary_csv("# other-schema\nheader\n").unwrap_err();
        assert!(matches!(err, CsvError::Schema { .. }));
        let good = write_summary_csv(&[]);
        let mangled = good.replace("final_error", "err");
        assert!(read_summary_csv(&mangled).is_err());
    }

    #[test]
    fn non_finite_errors_survive_the_roundtrip() {
        let mut r = row(0, AlgoKind::Rm, TrajectoryStatus::Diverged { at_step: 2 });
        r.final_error = f64::INFINITY;
        let text = write_summary_csv(std::slice::from_ref(&r));
        let parsed = read_summary_csv(&text).unwrap();
        assert_eq!(parsed[0].final_error, f64::INFINITY);
    }
}
