//! Executable surrogates for the convergence theory's hypotheses and
//! conclusions.
//!
//! Almost-sure statements cannot be checked on a computer; what can be
//! checked, per trajectory and per ensemble, is:
//!
//! * the localized martingale series `M̄_n = Σ_{i≤n} γ_i δM_i 1{‖X_{i−1} −
//!   x*‖ ≤ q}` looks convergent — its tail oscillation over the final
//!   window is small on the scale predicted by the gain tail and the local
//!   second-moment bound ([`MartingaleMonitor`], [`predicted_bracket_bound`]);
//! * the truncation count stabilizes — no resets after an initial fraction
//!   of the run ([`stabilization_report`]);
//! * the iterate converges — final error under tolerance, with ensemble
//!   frequencies and Wilson intervals standing in for "almost surely"
//!   ([`convergence_report`], [`aggregate`]).
//!
//! Monitors require the exact martingale increment, which the synthetic
//! problems provide by construction; every [`Problem`](crate::problems::Problem)
//! carries its exact mean field, so no estimated-drift fallback exists here.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::sa_core::{StepRecord, Trajectory, TrajectoryStatus};
use crate::schedules::GainSchedule;
use crate::vecmath::{dist, norm};

/// Online tracker for the localized martingale partial sums at one radius.
#[derive(Debug, Clone)]
pub struct MartingaleMonitor {
    q: f64,
    dim: usize,
    total_steps: u64,
    window: u64,
    partial_sum: Vec<f64>,
    running_sup: f64,
    tail_oscillation: f64,
    /// Ring of the last `window + 1` partial sums, flattened.
    ring: Vec<f64>,
    steps_seen: u64,
}

/// Scalar summary of a finished monitor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorSummary {
    pub q: f64,
    /// `sup_n ‖M̄_n‖` over the whole run.
    pub running_sup: f64,
    /// `max ‖M̄_n − M̄_{n−W}‖` over the last window.
    pub tail_oscillation: f64,
    /// `‖M̄_N‖` at the end.
    pub final_norm: f64,
}

impl MartingaleMonitor {
    /// Monitor for radius `q` on a run of `total_steps` steps, with the
    /// oscillation window `window` (clamped to the run length).
    pub fn new(q: f64, dim: usize, total_steps: u64, window: u64) -> Self {
        assert!(q > 0.0, "localization radius must be positive");
        let window = window.min(total_steps);
        let slots = (window as usize + 1) * dim;
        Self {
            q,
            dim,
            total_steps,
            window,
            partial_sum: vec![0.0; dim],
            running_sup: 0.0,
            tail_oscillation: 0.0,
            ring: vec![0.0; slots],
            steps_seen: 0,
        }
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn partial_sum(&self) -> &[f64] {
        &self.partial_sum
    }

    pub fn running_sup(&self) -> f64 {
        self.running_sup
    }

    pub fn tail_oscillation(&self) -> f64 {
        self.tail_oscillation
    }

    /// Feed one step from its record. `x_prev` is the pre-step iterate
    /// `X_{n−1}` whose distance to `x_star` drives the indicator.
    pub fn update(&mut self, record: &StepRecord, x_prev: &[f64], x_star: &[f64]) {
        self.update_parts(record.gamma, &record.delta_m, dist(x_prev, x_star));
    }

    /// Allocation-free update used by the trajectory runner.
    #[inline]
    pub fn update_parts(&mut self, gamma: f64, delta_m: &[f64], dist_prev_to_root: f64) {
        debug_assert_eq!(delta_m.len(), self.dim);
        self.steps_seen += 1;
        if dist_prev_to_root <= self.q {
            for (acc, dm) in self.partial_sum.iter_mut().zip(delta_m) {
                *acc += gamma * dm;
            }
        }
        let n = norm(&self.partial_sum);
        if n > self.running_sup {
            self.running_sup = n;
        }
        if self.window > 0 {
            let slots = self.window + 1;
            let step = self.steps_seen;
            // In the final window, compare against the sum from `window`
            // steps ago; the ring still holds it. Entries before step 0 are
            // the initial zeros, which is exactly M̄_{≤0}.
            if step + self.window > self.total_steps {
                let lag_slot = ((step + slots - self.window) % slots) as usize * self.dim;
                let lagged = &self.ring[lag_slot..lag_slot + self.dim];
                let mut d2 = 0.0;
                for i in 0..self.dim {
                    let c = self.partial_sum[i] - lagged[i];
                    d2 += c * c;
                }
                let osc = d2.sqrt();
                if osc > self.tail_oscillation {
                    self.tail_oscillation = osc;
                }
            }
            let slot = (step % slots) as usize * self.dim;
            self.ring[slot..slot + self.dim].copy_from_slice(&self.partial_sum);
        }
    }

    pub fn summary(&self) -> MonitorSummary {
        MonitorSummary {
            q: self.q,
            running_sup: self.running_sup,
            tail_oscillation: self.tail_oscillation,
            final_norm: norm(&self.partial_sum),
        }
    }
}

/// Upper bound on the tail `Σ_{n>from_n} γ_n² · bound` of the predictable
/// bracket of the localized martingale.
///
/// For the power law `γ_n = a/(b+n)^α` the integral comparison
/// `Σ_{n>N} (b+n)^{−2α} ≤ ∫_N^∞ (b+x)^{−2α} dx = (b+N)^{1−2α}/(2α−1)`
/// gives the bound; it is infinite for `α ≤ 1/2`. For a custom finite gain
/// list the squares beyond `from_n` are summed directly (the repeat-last
/// convention of [`GainSchedule::gain`] is ignored: the list is treated as
/// the whole sequence).
pub fn predicted_bracket_bound(
    schedule: &GainSchedule,
    second_moment_bound: f64,
    from_n: u64,
) -> f64 {
    assert!(
        second_moment_bound >= 0.0,
        "second-moment bound must be nonnegative"
    );
    if second_moment_bound == 0.0 {
        return 0.0;
    }
    match schedule {
        GainSchedule::PowerLaw { a, b, alpha } => {
            if *alpha <= 0.5 {
                return f64::INFINITY;
            }
            let n = from_n as f64;
            let tail = (b + n).powf(1.0 - 2.0 * alpha) / (2.0 * alpha - 1.0);
            second_moment_bound * a * a * tail
        }
        GainSchedule::Custom(values) => {
            let start = from_n as usize;
            let tail: f64 = values.iter().skip(start).map(|g| g * g).sum();
            second_moment_bound * tail
        }
    }
}

/// Truncation-stabilization verdict for one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilizationReport {
    pub final_sigma: u32,
    pub last_truncation_step: Option<u64>,
    /// True when the last truncation happened within the first
    /// `threshold_fraction` of the run (or never happened).
    pub stabilized: bool,
}

/// Classify stabilization: the empirical stand-in for "σ_n is finite" is
/// that truncations stop early in the run.
pub fn stabilization_report(
    final_sigma: u32,
    last_truncation_step: Option<u64>,
    n_steps: u64,
    threshold_fraction: f64,
) -> StabilizationReport {
    let stabilized = match last_truncation_step {
        None => true,
        Some(step) => (step as f64) <= threshold_fraction * n_steps as f64,
    };
    StabilizationReport {
        final_sigma,
        last_truncation_step,
        stabilized,
    }
}

/// Per-tolerance convergence outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToleranceOutcome {
    pub tol: f64,
    /// First recorded step from which the error stays ≤ tol through the end
    /// of the trace.
    pub first_hit_step: Option<u64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub final_error: f64,
    pub outcomes: Vec<ToleranceOutcome>,
}

/// Convergence against each tolerance. The trajectory's trace stores the
/// error to the problem root, so no separate root argument is needed; the
/// first-hit step is resolved on the recorded trace and "persisting" means
/// every later recorded point also sits under the tolerance.
pub fn convergence_report(traj: &Trajectory, tolerances: &[f64]) -> ConvergenceReport {
    let outcomes = tolerances
        .iter()
        .map(|&tol| {
            let mut first_hit = None;
            if traj.status.is_completed() {
                for point in traj.trace.iter().rev() {
                    if point.error <= tol {
                        first_hit = Some(point.step);
                    } else {
                        break;
                    }
                }
            }
            ToleranceOutcome {
                tol,
                first_hit_step: first_hit,
                converged: traj.status.is_completed() && traj.final_error <= tol,
            }
        })
        .collect();
    ConvergenceReport {
        final_error: traj.final_error,
        outcomes,
    }
}

/// 95% Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// A fraction together with its Wilson 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractionEstimate {
    pub count: u64,
    pub fraction: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

impl FractionEstimate {
    fn from_counts(count: u64, n: u64) -> Self {
        let (lo, hi) = wilson_interval(count, n);
        Self {
            count,
            fraction: if n == 0 { 0.0 } else { count as f64 / n as f64 },
            wilson_low: lo,
            wilson_high: hi,
        }
    }
}

/// Distribution summary of one monitored radius across an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorAggregate {
    pub q: f64,
    pub sup_median: f64,
    pub sup_max: f64,
    pub tail_oscillation_median: f64,
    pub tail_oscillation_p95: f64,
    pub tail_oscillation_max: f64,
}

/// Ensemble-level statistics over homogeneous trajectories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleReport {
    pub n_trajectories: u64,
    pub n_completed: u64,
    pub n_diverged: u64,
    pub n_aborted: u64,
    /// One entry per tolerance, in the order supplied.
    pub frac_converged: Vec<(f64, FractionEstimate)>,
    /// Final σ value → trajectory count; counts sum to `n_trajectories`.
    pub sigma_histogram: BTreeMap<u32, u64>,
    pub max_sigma: u32,
    pub frac_stabilized: FractionEstimate,
    pub median_final_error: f64,
    /// Per monitored radius, in the order supplied.
    pub martingale: Vec<MonitorAggregate>,
    /// Filled by paired runs: fraction of the partner Robbins–Monro
    /// ensemble that diverged.
    pub rm_divergence_fraction: Option<f64>,
}

/// Aggregation knobs.
#[derive(Debug, Clone)]
pub struct AggregateOptions {
    pub tolerances: Vec<f64>,
    pub stabilization_fraction: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Fold an ensemble of trajectories into one report. Deterministic given
/// the trajectory order; all order-sensitive reductions run in input order.
pub fn aggregate(trajectories: &[Trajectory], opts: &AggregateOptions) -> EnsembleReport {
    assert!(!trajectories.is_empty(), "aggregate needs trajectories");
    let n = trajectories.len() as u64;
    let mut n_completed = 0;
    let mut n_diverged = 0;
    let mut n_aborted = 0;
    let mut sigma_histogram = BTreeMap::new();
    let mut max_sigma = 0;
    let mut stabilized = 0;
    let mut errors: Vec<f64> = Vec::with_capacity(trajectories.len());
    for t in trajectories {
        match t.status {
            TrajectoryStatus::Completed => n_completed += 1,
            TrajectoryStatus::Diverged { .. } => n_diverged += 1,
            TrajectoryStatus::Aborted { .. } => n_aborted += 1,
        }
        let sigma = t.final_state.sigma;
        *sigma_histogram.entry(sigma).or_insert(0) += 1;
        max_sigma = max_sigma.max(sigma);
        if stabilization_report(
            sigma,
            t.last_truncation_step,
            t.n_steps,
            opts.stabilization_fraction,
        )
        .stabilized
        {
            stabilized += 1;
        }
        errors.push(t.final_error);
    }
    let frac_converged = opts
        .tolerances
        .iter()
        .map(|&tol| {
            let k = trajectories
                .iter()
                .filter(|t| t.status.is_completed() && t.final_error <= tol)
                .count() as u64;
            (tol, FractionEstimate::from_counts(k, n))
        })
        .collect();
    errors.sort_by(f64::total_cmp);

    let n_monitors = trajectories[0].monitors.len();
    let martingale = (0..n_monitors)
        .map(|mi| {
            let mut sups: Vec<f64> = trajectories
                .iter()
                .map(|t| t.monitors[mi].running_sup)
                .collect();
            let mut tails: Vec<f64> = trajectories
                .iter()
                .map(|t| t.monitors[mi].tail_oscillation)
                .collect();
            sups.sort_by(f64::total_cmp);
            tails.sort_by(f64::total_cmp);
            MonitorAggregate {
                q: trajectories[0].monitors[mi].q,
                sup_median: quantile(&sups, 0.5),
                sup_max: *sups.last().unwrap(),
                tail_oscillation_median: quantile(&tails, 0.5),
                tail_oscillation_p95: quantile(&tails, 0.95),
                tail_oscillation_max: *tails.last().unwrap(),
            }
        })
        .collect();

    EnsembleReport {
        n_trajectories: n,
        n_completed,
        n_diverged,
        n_aborted,
        frac_converged,
        sigma_histogram,
        max_sigma,
        frac_stabilized: FractionEstimate::from_counts(stabilized, n),
        median_final_error: quantile(&errors, 0.5),
        martingale,
        rm_divergence_fraction: None,
    }
}
