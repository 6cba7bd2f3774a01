//! Experiment configuration: a flat, human-writable text format with dotted
//! keys.
//!
//! Grammar, in full:
//!
//! ```text
//! file    := line*
//! line    := blank | comment | entry
//! comment := '#' .*
//! entry   := key '=' value
//! key     := dotted lowercase identifier, e.g. `gain.alpha`
//! value   := scalar | scalar (',' scalar)*
//! ```
//!
//! Unknown and duplicate keys are errors; every omitted key falls back to a
//! documented default, and each applied default is echoed into the run
//! manifest. See the crate README for the key reference.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::problems::{MatrixSpec, NoiseKind, NoiseModel, Problem, ProblemError};
use crate::sa_core::{RecordPolicy, ResetRule};
use crate::schedules::{CompactFamily, GainSchedule, Growth, ScheduleError};
use crate::vecmath::{dist, norm};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid value for {field} at line {line}: {msg}")]
    Value {
        field: String,
        line: usize,
        msg: String,
    },
    #[error("validation failed for {field}: {msg}")]
    Validation { field: String, msg: String },
}

/// Which problem family to instantiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemName {
    Linear,
    Cubic,
    ConvexPotential,
    /// `u(x) = −x`: a deliberate monotonicity violation, accepted so the
    /// hypothesis checkers have something to fail on.
    Adversarial,
}

impl ProblemName {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(Self::Linear),
            "cubic" => Some(Self::Cubic),
            "convex_potential" => Some(Self::ConvexPotential),
            "adversarial" => Some(Self::Adversarial),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Cubic => "cubic",
            Self::ConvexPotential => "convex_potential",
            Self::Adversarial => "adversarial",
        }
    }
}

/// Which engine(s) an ensemble runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmChoice {
    Chen,
    Rm,
    /// Both engines per trajectory index, with identical noise streams.
    BothPaired,
}

impl AlgorithmChoice {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "chen" => Some(Self::Chen),
            "rm" => Some(Self::Rm),
            "both_paired" => Some(Self::BothPaired),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Chen => "chen",
            Self::Rm => "rm",
            Self::BothPaired => "both_paired",
        }
    }
}

/// Fully resolved and validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem_name: ProblemName,
    pub dim: usize,
    pub x_star: Vec<f64>,
    pub matrix_diag: Option<Vec<f64>>,
    pub noise: NoiseModel,
    pub algorithm: AlgorithmChoice,
    pub gain_a: f64,
    pub gain_b: f64,
    pub gain_alpha: f64,
    pub compacts_r0: f64,
    pub compacts_growth: Growth,
    pub x0: Vec<f64>,
    pub n_steps: u64,
    pub n_trajectories: u64,
    pub master_seed: u64,
    pub record_policy: RecordPolicy,
    pub write_traces: bool,
    pub divergence_threshold: f64,
    pub reset_rule: ResetRule,
    pub monitor_radii: Vec<f64>,
    pub tolerances: Vec<f64>,
    pub stabilization_fraction: f64,
    /// `key = value (default)` lines echoed into the manifest.
    pub applied_defaults: Vec<String>,
    /// Non-fatal notes, e.g. ignored compacts on rm-only runs.
    pub warnings: Vec<String>,
}

/// Read and validate a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

/// Parse and validate config text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut entries: BTreeMap<String, (String, usize)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Parse {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(ConfigError::Parse {
                line: line_no,
                msg: "empty key".into(),
            });
        }
        if entries.insert(key.clone(), (value, line_no)).is_some() {
            return Err(ConfigError::Parse {
                line: line_no,
                msg: format!("duplicate key `{key}`"),
            });
        }
    }
    resolve(entries)
}

struct Entries {
    map: BTreeMap<String, (String, usize)>,
    defaults: Vec<String>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.map.remove(key)
    }

    fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn note_default(&mut self, key: &str, value: impl std::fmt::Display) {
        self.defaults.push(format!("{key} = {value} (default)"));
    }
}

fn parse_f64(field: &str, raw: &str, line: usize) -> Result<f64, ConfigError> {
    raw.parse::<f64>().map_err(|_| ConfigError::Value {
        field: field.into(),
        line,
        msg: format!("`{raw}` is not a number"),
    })
}

fn parse_u64(field: &str, raw: &str, line: usize) -> Result<u64, ConfigError> {
    raw.parse::<u64>().map_err(|_| ConfigError::Value {
        field: field.into(),
        line,
        msg: format!("`{raw}` is not an unsigned integer"),
    })
}

fn parse_bool(field: &str, raw: &str, line: usize) -> Result<bool, ConfigError> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::Value {
            field: field.into(),
            line,
            msg: format!("`{raw}` is not `true` or `false`"),
        }),
    }
}

fn parse_vec(field: &str, raw: &str, line: usize) -> Result<Vec<f64>, ConfigError> {
    let vals: Result<Vec<f64>, _> = raw.split(',').map(|s| parse_f64(field, s.trim(), line)).collect();
    let vals = vals?;
    if vals.is_empty() {
        return Err(ConfigError::Value {
            field: field.into(),
            line,
            msg: "expected at least one value".into(),
        });
    }
    Ok(vals)
}

fn validation(field: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.into(),
        msg: msg.into(),
    }
}

fn resolve(map: BTreeMap<String, (String, usize)>) -> Result<ExperimentConfig, ConfigError> {
    let mut e = Entries {
        map,
        defaults: Vec::new(),
    };
    let mut warnings = Vec::new();

    // Required keys.
    let (raw, line) = e
        .take("problem.name")
        .ok_or_else(|| validation("problem.name", "required key is missing"))?;
    let problem_name = ProblemName::parse(&raw).ok_or_else(|| ConfigError::Value {
        field: "problem.name".into(),
        line,
        msg: format!("`{raw}` is not one of linear, cubic, convex_potential, adversarial"),
    })?;

    let (raw, line) = e
        .take("problem.dim")
        .ok_or_else(|| validation("problem.dim", "required key is missing"))?;
    let dim = parse_u64("problem.dim", &raw, line)? as usize;
    if dim == 0 {
        return Err(validation("problem.dim", "must be at least 1"));
    }

    let (raw, line) = e
        .take("algorithm")
        .ok_or_else(|| validation("algorithm", "required key is missing"))?;
    let algorithm = AlgorithmChoice::parse(&raw).ok_or_else(|| ConfigError::Value {
        field: "algorithm".into(),
        line,
        msg: format!("`{raw}` is not one of chen, rm, both_paired"),
    })?;

    let (raw, line) = e
        .take("n_steps")
        .ok_or_else(|| validation("n_steps", "required key is missing"))?;
    let n_steps = parse_u64("n_steps", &raw, line)?;
    if n_steps < 1 {
        return Err(validation("n_steps", "must be at least 1"));
    }

    let (raw, line) = e
        .take("seed")
        .ok_or_else(|| validation("seed", "required key is missing"))?;
    let master_seed = parse_u64("seed", &raw, line)?;

    // Optional keys with defaults.
    let x_star = match e.take("problem.x_star") {
        Some((raw, line)) => parse_vec("problem.x_star", &raw, line)?,
        None => {
            e.note_default("problem.x_star", join(&vec![0.0; dim]));
            vec![0.0; dim]
        }
    };
    if x_star.len() != dim {
        return Err(validation(
            "problem.x_star",
            format!("has {} entries, expected dim = {dim}", x_star.len()),
        ));
    }
    if matches!(
        problem_name,
        ProblemName::ConvexPotential | ProblemName::Adversarial
    ) && x_star.iter().any(|c| *c != 0.0)
    {
        return Err(validation(
            "problem.x_star",
            format!("{} has its root fixed at the origin", problem_name.as_str()),
        ));
    }

    let matrix_diag = match e.take("problem.matrix_diag") {
        Some((raw, line)) => {
            if problem_name != ProblemName::Linear {
                return Err(validation(
                    "problem.matrix_diag",
                    "only meaningful for problem.name = linear",
                ));
            }
            let d = parse_vec("problem.matrix_diag", &raw, line)?;
            if d.len() != dim {
                return Err(validation(
                    "problem.matrix_diag",
                    format!("has {} entries, expected dim = {dim}", d.len()),
                ));
            }
            Some(d)
        }
        None => None,
    };

    let noise_kind = match e.take("noise.kind") {
        Some((raw, line)) => match raw.as_str() {
            "additive" => NoiseKind::AdditiveGaussian,
            "state_scaled" => NoiseKind::StateScaledGaussian,
            _ => {
                return Err(ConfigError::Value {
                    field: "noise.kind".into(),
                    line,
                    msg: format!("`{raw}` is not one of additive, state_scaled"),
                })
            }
        },
        None => {
            e.note_default("noise.kind", "additive");
            NoiseKind::AdditiveGaussian
        }
    };
    let sigma = match e.take("noise.sigma") {
        Some((raw, line)) => parse_f64("noise.sigma", &raw, line)?,
        None => {
            e.note_default("noise.sigma", 1.0);
            1.0
        }
    };
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(validation("noise.sigma", "must be nonnegative and finite"));
    }
    let noise = NoiseModel {
        kind: noise_kind,
        sigma,
    };

    let gain_a = take_f64_or_default(&mut e, "gain.a", 1.0)?;
    let gain_b = take_f64_or_default(&mut e, "gain.b", 0.0)?;
    let gain_alpha = take_f64_or_default(&mut e, "gain.alpha", 1.0)?;
    if let Err(err) = GainSchedule::power_law(gain_a, gain_b, gain_alpha) {
        let field = match err {
            ScheduleError::InvalidScale(_) => "gain.a",
            ScheduleError::InvalidOffset(_) => "gain.b",
            ScheduleError::InvalidAlpha(_) => "gain.alpha",
            _ => "gain",
        };
        let msg = match err {
            ScheduleError::InvalidAlpha(a) => format!("must be in (0.5, 1], got {a}"),
            other => other.to_string(),
        };
        return Err(validation(field, msg));
    }

    let x0 = match e.take("x0") {
        Some((raw, line)) => parse_vec("x0", &raw, line)?,
        None => {
            let mut v = vec![0.0; dim];
            v[0] = 0.5;
            e.note_default("x0", join(&v));
            v
        }
    };
    if x0.len() != dim {
        return Err(validation(
            "x0",
            format!("has {} entries, expected dim = {dim}", x0.len()),
        ));
    }
    if !x0.iter().all(|c| c.is_finite()) {
        return Err(validation("x0", "coordinates must be finite"));
    }

    let compacts_keys_present =
        e.has("compacts.r0") || e.has("compacts.growth") || e.has("compacts.rho_or_step");
    let compacts_r0 = match e.take("compacts.r0") {
        Some((raw, line)) => parse_f64("compacts.r0", &raw, line)?,
        None => {
            let r0 = 2.0 * norm(&x0) + 1.0;
            e.note_default("compacts.r0", fmt_f64(r0));
            r0
        }
    };
    let growth_kind = match e.take("compacts.growth") {
        Some((raw, line)) => match raw.as_str() {
            "geometric" => "geometric",
            "arithmetic" => "arithmetic",
            _ => {
                return Err(ConfigError::Value {
                    field: "compacts.growth".into(),
                    line,
                    msg: format!("`{raw}` is not one of geometric, arithmetic"),
                })
            }
        },
        None => {
            e.note_default("compacts.growth", "geometric");
            "geometric"
        }
    };
    let rho_or_step = take_f64_or_default(&mut e, "compacts.rho_or_step", 2.0)?;
    let compacts_growth = if growth_kind == "geometric" {
        Growth::Geometric(rho_or_step)
    } else {
        Growth::Arithmetic(rho_or_step)
    };
    match CompactFamily::new(vec![0.0; dim], compacts_r0, compacts_growth) {
        Ok(fam) => {
            if algorithm != AlgorithmChoice::Rm && !fam.contains(0, &x0) {
                return Err(validation(
                    "x0",
                    format!(
                        "x0 is outside K_0 (|x0| = {}, r0 = {})",
                        fmt_f64(norm(&x0)),
                        fmt_f64(compacts_r0)
                    ),
                ));
            }
        }
        Err(err) => {
            let field = match err {
                ScheduleError::InvalidRadius(_) => "compacts.r0",
                _ => "compacts.rho_or_step",
            };
            return Err(validation(field, err.to_string()));
        }
    }
    if algorithm == AlgorithmChoice::Rm && compacts_keys_present {
        warnings.push("compacts.* keys are ignored for algorithm = rm".to_string());
    }

    let n_trajectories = match e.take("n_trajectories") {
        Some((raw, line)) => parse_u64("n_trajectories", &raw, line)?,
        None => {
            e.note_default("n_trajectories", 1);
            1
        }
    };
    if n_trajectories < 1 {
        return Err(validation("n_trajectories", "must be at least 1"));
    }

    let record_policy = match e.take("record_policy") {
        Some((raw, line)) => parse_record_policy(&raw, line)?,
        None => {
            let k = n_steps.div_ceil(1000).max(1);
            e.note_default("record_policy", format!("thinned:{k}"));
            RecordPolicy::Thinned(k)
        }
    };
    if let RecordPolicy::Thinned(k) = record_policy {
        if k < 1 {
            return Err(validation("record_policy", "thinning stride must be >= 1"));
        }
    }

    let write_traces = match e.take("write_traces") {
        Some((raw, line)) => parse_bool("write_traces", &raw, line)?,
        None => {
            e.note_default("write_traces", false);
            false
        }
    };

    let divergence_threshold = take_f64_or_default(&mut e, "divergence_threshold", 1e6)?;
    if !(divergence_threshold > 0.0) {
        return Err(validation("divergence_threshold", "must be positive"));
    }

    let reset_rule = match e.take("reset") {
        Some((raw, line)) => match raw.as_str() {
            "x0" => ResetRule::StartPoint,
            "last_valid" => ResetRule::LastValid,
            _ => {
                return Err(ConfigError::Value {
                    field: "reset".into(),
                    line,
                    msg: format!("`{raw}` is not one of x0, last_valid"),
                })
            }
        },
        None => {
            e.note_default("reset", "x0");
            ResetRule::StartPoint
        }
    };

    let monitor_radii = match e.take("diag.q") {
        Some((raw, line)) => parse_vec("diag.q", &raw, line)?,
        None => {
            let q0 = 2.0 * dist(&x0, &x_star) + 1.0;
            let v = vec![q0, 2.0 * q0, 4.0 * q0];
            e.note_default("diag.q", join(&v));
            v
        }
    };
    if monitor_radii.iter().any(|q| !(*q > 0.0) || !q.is_finite()) {
        return Err(validation("diag.q", "radii must be positive and finite"));
    }

    let tolerances = match e.take("diag.tolerances") {
        Some((raw, line)) => parse_vec("diag.tolerances", &raw, line)?,
        None => {
            e.note_default("diag.tolerances", "0.05");
            vec![0.05]
        }
    };
    if tolerances.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(validation(
            "diag.tolerances",
            "tolerances must be positive and finite",
        ));
    }

    let stabilization_fraction =
        take_f64_or_default(&mut e, "diag.stabilization_fraction", 0.1)?;
    if !(stabilization_fraction > 0.0 && stabilization_fraction <= 1.0) {
        return Err(validation(
            "diag.stabilization_fraction",
            "must be in (0, 1]",
        ));
    }

    // Anything left over is a typo or an unsupported key.
    if let Some((key, (_, line))) = e.map.iter().next() {
        return Err(ConfigError::Parse {
            line: *line,
            msg: format!("unknown key `{key}`"),
        });
    }

    let config = ExperimentConfig {
        problem_name,
        dim,
        x_star,
        matrix_diag,
        noise,
        algorithm,
        gain_a,
        gain_b,
        gain_alpha,
        compacts_r0,
        compacts_growth,
        x0,
        n_steps,
        n_trajectories,
        master_seed,
        record_policy,
        write_traces,
        divergence_threshold,
        reset_rule,
        monitor_radii,
        tolerances,
        stabilization_fraction,
        applied_defaults: e.defaults,
        warnings,
    };
    // Problem construction can still reject (e.g. a non-SPD diagonal).
    config
        .build_problem()
        .map_err(|err| match err {
            ProblemError::NotSpd => validation(
                "problem.matrix_diag",
                "matrix must be symmetric positive definite",
            ),
            other => validation("problem", other.to_string()),
        })?;
    Ok(config)
}

fn take_f64_or_default(
    e: &mut Entries,
    key: &str,
    default: f64,
) -> Result<f64, ConfigError> {
    match e.take(key) {
        Some((raw, line)) => parse_f64(key, &raw, line),
        None => {
            e.note_default(key, fmt_f64(default));
            Ok(default)
        }
    }
}

fn parse_record_policy(raw: &str, line: usize) -> Result<RecordPolicy, ConfigError> {
    if raw == "full" {
        return Ok(RecordPolicy::Full);
    }
    if raw == "final_only" {
        return Ok(RecordPolicy::FinalOnly);
    }
    if let Some(k) = raw.strip_prefix("thinned:") {
        let k = parse_u64("record_policy", k, line)?;
        return Ok(RecordPolicy::Thinned(k));
    }
    Err(ConfigError::Value {
        field: "record_policy".into(),
        line,
        msg: format!("`{raw}` is not one of full, thinned:K, final_only"),
    })
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn join(vals: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in vals.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v}");
    }
    out
}

impl ExperimentConfig {
    /// Canonical `key = value` serialization of the resolved experiment
    /// parameters, sorted by key. Execution details (output directory,
    /// worker count) are not part of the experiment identity and do not
    /// appear here.
    pub fn canonical_string(&self) -> String {
        let mut pairs: Vec<(String, String)> = vec![
            ("algorithm".into(), self.algorithm.as_str().into()),
            ("compacts.growth".into(), match self.compacts_growth {
                Growth::Geometric(_) => "geometric".into(),
                Growth::Arithmetic(_) => "arithmetic".into(),
            }),
            ("compacts.r0".into(), fmt_f64(self.compacts_r0)),
            ("compacts.rho_or_step".into(), match self.compacts_growth {
                Growth::Geometric(r) | Growth::Arithmetic(r) => fmt_f64(r),
            }),
            ("diag.q".into(), join(&self.monitor_radii)),
            (
                "diag.stabilization_fraction".into(),
                fmt_f64(self.stabilization_fraction),
            ),
            ("diag.tolerances".into(), join(&self.tolerances)),
            (
                "divergence_threshold".into(),
                fmt_f64(self.divergence_threshold),
            ),
            ("gain.a".into(), fmt_f64(self.gain_a)),
            ("gain.b".into(), fmt_f64(self.gain_b)),
            ("gain.alpha".into(), fmt_f64(self.gain_alpha)),
            ("n_steps".into(), self.n_steps.to_string()),
            ("n_trajectories".into(), self.n_trajectories.to_string()),
            ("noise.kind".into(), match self.noise.kind {
                NoiseKind::AdditiveGaussian => "additive".into(),
                NoiseKind::StateScaledGaussian => "state_scaled".into(),
            }),
            ("noise.sigma".into(), fmt_f64(self.noise.sigma)),
            ("problem.dim".into(), self.dim.to_string()),
            ("problem.name".into(), self.problem_name.as_str().into()),
            ("problem.x_star".into(), join(&self.x_star)),
            ("record_policy".into(), match self.record_policy {
                RecordPolicy::Full => "full".into(),
                RecordPolicy::Thinned(k) => format!("thinned:{k}"),
                RecordPolicy::FinalOnly => "final_only".into(),
            }),
            ("reset".into(), match self.reset_rule {
                ResetRule::StartPoint => "x0".into(),
                ResetRule::LastValid => "last_valid".into(),
            }),
            ("seed".into(), self.master_seed.to_string()),
            ("write_traces".into(), self.write_traces.to_string()),
            ("x0".into(), join(&self.x0)),
        ];
        if let Some(d) = &self.matrix_diag {
            pairs.push(("problem.matrix_diag".into(), join(d)));
        }
        pairs.sort();
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Stable hex digest of [`canonical_string`](Self::canonical_string);
    /// textually different files describing the same experiment hash
    /// identically.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            let _ = write!(out, "{byte:02x}");
        }
        out
    }

    pub fn build_problem(&self) -> Result<Problem, ProblemError> {
        let noise = self.noise;
        match self.problem_name {
            ProblemName::Linear => {
                let spec = match &self.matrix_diag {
                    Some(d) => MatrixSpec::Diagonal(d.clone()),
                    None => MatrixSpec::Identity,
                };
                Problem::linear(self.dim, spec, self.x_star.clone(), noise)
            }
            ProblemName::Cubic => Problem::cubic(self.dim, self.x_star.clone(), noise),
            ProblemName::ConvexPotential => Problem::convex_potential(self.dim, noise),
            ProblemName::Adversarial => Problem::adversarial(self.dim, noise),
        }
    }

    pub fn build_schedule(&self) -> Result<GainSchedule, ScheduleError> {
        GainSchedule::power_law(self.gain_a, self.gain_b, self.gain_alpha)
    }

    /// Compact family centered at the origin, per the config keys.
    pub fn build_compacts(&self) -> Result<CompactFamily, ScheduleError> {
        CompactFamily::new(vec![0.0; self.dim], self.compacts_r0, self.compacts_growth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
problem.name = cubic
problem.dim = 1
algorithm = chen
n_steps = 1000
seed = 42
";

    #[test]
    fn minimal_config_fills_documented_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.problem_name, ProblemName::Cubic);
        assert_eq!(cfg.gain_a, 1.0);
        assert_eq!(cfg.gain_b, 0.0);
        assert_eq!(cfg.gain_alpha, 1.0);
        assert_eq!(cfg.x0, vec![0.5]);
        // r0 = 2 |x0| + 1 = 2.
        assert_eq!(cfg.compacts_r0, 2.0);
        assert_eq!(cfg.compacts_growth, Growth::Geometric(2.0));
        assert_eq!(cfg.record_policy, RecordPolicy::Thinned(1));
        assert_eq!(cfg.n_trajectories, 1);
        assert_eq!(cfg.tolerances, vec![0.05]);
        // q0 = 2 * 0.5 + 1 = 2, monitored at {q0, 2q0, 4q0}.
        assert_eq!(cfg.monitor_radii, vec![2.0, 4.0, 8.0]);
        assert!(cfg
            .applied_defaults
            .iter()
            .any(|d| d == "gain.alpha = 1 (default)"));
        assert!(cfg
            .applied_defaults
            .iter()
            .any(|d| d == "compacts.r0 = 2 (default)"));
        assert!(cfg.warnings.is_empty());
    }

    #[test]
    fn out_of_range_alpha_is_named_in_the_error() {
        let text = format!("{MINIMAL}gain.alpha = 0.4\n");
        let err = parse_config(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gain.alpha"), "{msg}");
        assert!(msg.contains("(0.5, 1]"), "{msg}");
    }

    #[test]
    fn x0_outside_k0_is_rejected() {
        let text = "\
problem.name = cubic
problem.dim = 2
algorithm = chen
n_steps = 100
seed = 1
x0 = 5,0
compacts.r0 = 1
";
        let err = parse_config(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("x0"), "{msg}");
        assert!(msg.contains("K_0"), "{msg}");
    }

    #[test]
    fn unknown_and_duplicate_keys_error_with_line_numbers() {
        let text = format!("{MINIMAL}gains.a = 2\n");
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 6, .. }), "{err}");
        assert!(err.to_string().contains("gains.a"));

        let text = format!("{MINIMAL}seed = 43\n");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("duplicate"));

        let err = parse_config("problem.name cubic\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn rm_with_compacts_warns_but_passes() {
        let text = "\
problem.name = cubic
problem.dim = 1
algorithm = rm
n_steps = 100
seed = 1
compacts.r0 = 3
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.warnings.len(), 1);
        assert!(cfg.warnings[0].contains("ignored"));
    }

    #[test]
    fn fixed_root_problems_reject_nonzero_x_star() {
        let text = "\
problem.name = convex_potential
problem.dim = 2
problem.x_star = 1,0
algorithm = chen
n_steps = 10
seed = 1
";
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("origin"));
    }

    #[test]
    fn non_spd_diagonal_is_rejected() {
        let text = "\
problem.name = linear
problem.dim = 2
problem.matrix_diag = 1,-4
algorithm = chen
n_steps = 10
seed = 1
";
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("positive definite"), "{err}");
    }

    #[test]
    fn hash_ignores_formatting_and_tracks_content() {
        let a = parse_config(MINIMAL).unwrap();
        let reordered = "\
seed = 42
n_steps = 1000

# a comment
algorithm = chen
problem.dim = 1
problem.name = cubic
";
        let b = parse_config(reordered).unwrap();
        assert_eq!(a.config_hash(), b.config_hash());

        let c = parse_config(&MINIMAL.replace("seed = 42", "seed = 43")).unwrap();
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn canonical_string_roundtrips_through_the_parser() {
        let cfg = parse_config(MINIMAL).unwrap();
        let canon = cfg.canonical_string();
        let reparsed = parse_config(&canon).unwrap();
        assert_eq!(reparsed.config_hash(), cfg.config_hash());
        // No defaults should fire when every key is explicit.
        assert!(reparsed.applied_defaults.is_empty());
    }

    #[test]
    fn record_policy_forms() {
        let base = "\
problem.name = cubic
problem.dim = 1
algorithm = chen
n_steps = 5000
seed = 7
";
        let cfg = parse_config(&format!("{base}record_policy = full\n")).unwrap();
        assert_eq!(cfg.record_policy, RecordPolicy::Full);
        let cfg = parse_config(&format!("{base}record_policy = thinned:50\n")).unwrap();
        assert_eq!(cfg.record_policy, RecordPolicy::Thinned(50));
        let cfg = parse_config(&format!("{base}record_policy = final_only\n")).unwrap();
        assert_eq!(cfg.record_policy, RecordPolicy::FinalOnly);
        // Default stride is ceil(n_steps / 1000).
        let cfg = parse_config(base).unwrap();
        assert_eq!(cfg.record_policy, RecordPolicy::Thinned(5));
        assert!(parse_config(&format!("{base}record_policy = sometimes\n")).is_err());
        assert!(parse_config(&format!("{base}record_policy = thinned:0\n")).is_err());
    }
}
