//! Stochastic approximation with randomly varying truncations.
//!
//! This crate implements two root-finding engines for problems of the form
//! `u(x) = E[U(x, Z)] = 0`:
//!
//! * the classic Robbins–Monro recursion
//!   `X_{n+1} = X_n - γ_{n+1} U(X_n, Z_{n+1})`, which requires sub-linear
//!   growth of the mean field to converge, and
//! * the randomly truncated variant, which confines the iterate to an
//!   expanding family of compact sets `K_0 ⊂ K_1 ⊂ …` and resets to the
//!   starting point whenever a half-step escapes the active compact. The
//!   truncated recursion converges under local hypotheses only, even when
//!   `E‖U(x,Z)‖²` grows faster than `‖x‖²`.
//!
//! On top of the engines sit executable diagnostics for the hypotheses the
//! convergence theory rests on (a Lyapunov-type monotonicity condition, gain
//! summability, local second-moment bounds, and convergence of the localized
//! martingale error series), plus a reproducible ensemble harness that turns
//! almost-sure statements into measurable ensemble frequencies.
//!
//! Module map:
//!
//! * [`schedules`] — gain sequences `γ_n` and expanding compact families.
//! * [`problems`] — synthetic stochastic oracles with known mean field and
//!   root, noise models, and hypothesis checkers.
//! * [`sa_core`] — the stepping engines and per-step decomposition records.
//! * [`diagnostics`] — martingale monitors, stabilization and convergence
//!   reports, ensemble aggregation.
//! * [`harness`] — config parsing, parallel ensemble execution, CSV/JSON
//!   persistence, and the hypothesis check runner.

pub mod diagnostics;
pub mod harness;
pub mod problems;
pub mod rng;
pub mod sa_core;
pub mod schedules;
pub mod vecmath;

pub use diagnostics::{
    aggregate, convergence_report, predicted_bracket_bound, stabilization_report, EnsembleReport,
    MartingaleMonitor,
};
pub use problems::{MatrixSpec, NoiseKind, NoiseModel, Problem};
pub use rng::{derive_trajectory_seed, CounterRng, ForcedNormals, NormalSource};
pub use sa_core::{
    run_trajectory, step_chen, step_rm, AlgoKind, ChenState, RecordPolicy, ResetRule, StepRecord,
    Trajectory, TrajectoryStatus,
};
pub use schedules::{CompactFamily, GainSchedule, Growth};
