//! Gain sequences and expanding compact-set families.
//!
//! The gain sequence `γ_n = a/(b+n)^α` drives both stepping engines. The
//! admissible exponent range `α ∈ (1/2, 1]` is enforced at construction
//! because it is exactly the power-law range where `Σ γ_n = ∞` and
//! `Σ γ_n² < ∞` both hold — the standard step-size summability conditions.
//!
//! Compact families are strictly nested closed Euclidean balls
//! `K_j = B̄(center, r_j)` with `r_j` strictly increasing and unbounded, so
//! `∪_j K_j = R^d`. Balls keep membership tests O(d) while satisfying the
//! nesting requirements trivially.

use thiserror::Error;

use crate::vecmath::dist;

/// Construction errors for schedules and compact families.
#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("gain scale a must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("gain offset b must be nonnegative and finite, got {0}")]
    InvalidOffset(f64),
    #[error("gain exponent alpha must lie in (0.5, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("custom gain sequence must be nonempty, positive, and nonincreasing")]
    InvalidCustomSequence,
    #[error("compact radius r0 must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("geometric growth ratio must be > 1 and finite, got {0}")]
    InvalidGrowthRatio(f64),
    #[error("arithmetic growth step must be positive and finite, got {0}")]
    InvalidGrowthStep(f64),
    #[error("compact center must have finite coordinates")]
    NonFiniteCenter,
}

/// Classification of a gain sequence against the summability conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct H2Classification {
    /// `Σ_n γ_n = ∞`
    pub divergent_sum: bool,
    /// `Σ_n γ_n² < ∞`
    pub square_summable: bool,
}

impl H2Classification {
    /// Both conditions hold.
    pub fn holds(&self) -> bool {
        self.divergent_sum && self.square_summable
    }
}

/// Decreasing positive gain sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum GainSchedule {
    /// `γ_n = a / (b + n)^alpha` for `n ≥ 1`.
    PowerLaw { a: f64, b: f64, alpha: f64 },
    /// Explicit list of gains for tests; `γ_n = values[n-1]`, repeating the
    /// final value once the list is exhausted. Exempt from the exponent
    /// validation (and from the analytic summability classification, which
    /// treats a finite list as trivially square-summable).
    Custom(Vec<f64>),
}

impl GainSchedule {
    /// Validated power-law schedule with `a > 0`, `b ≥ 0`, `alpha ∈ (1/2, 1]`.
    pub fn power_law(a: f64, b: f64, alpha: f64) -> Result<Self, ScheduleError> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(ScheduleError::InvalidScale(a));
        }
        if !(b >= 0.0) || !b.is_finite() {
            return Err(ScheduleError::InvalidOffset(b));
        }
        if !(alpha > 0.5 && alpha <= 1.0) {
            return Err(ScheduleError::InvalidAlpha(alpha));
        }
        Ok(Self::PowerLaw { a, b, alpha })
    }

    /// Power-law schedule without the exponent range check.
    ///
    /// Exists so tests can classify inadmissible exponents; everything else
    /// should go through [`GainSchedule::power_law`].
    pub fn power_law_unchecked(a: f64, b: f64, alpha: f64) -> Self {
        Self::PowerLaw { a, b, alpha }
    }

    /// Custom gain list for tests; must be nonempty, positive, nonincreasing.
    pub fn custom(values: Vec<f64>) -> Result<Self, ScheduleError> {
        let ok = !values.is_empty()
            && values.iter().all(|g| g.is_finite() && *g > 0.0)
            && values.windows(2).all(|w| w[1] <= w[0]);
        if !ok {
            return Err(ScheduleError::InvalidCustomSequence);
        }
        Ok(Self::Custom(values))
    }

    /// The gain `γ_n` applied when stepping from `X_{n-1}` to `X_n`; `n ≥ 1`.
    #[inline]
    pub fn gain(&self, n: u64) -> f64 {
        debug_assert!(n >= 1, "gains are indexed from 1");
        match self {
            Self::PowerLaw { a, b, alpha } => {
                let base = b + n as f64;
                if *alpha == 1.0 {
                    a / base
                } else {
                    a / base.powf(*alpha)
                }
            }
            Self::Custom(values) => {
                let i = (n as usize - 1).min(values.len() - 1);
                values[i]
            }
        }
    }

    /// Analytic summability classification.
    ///
    /// For the power law this is the p-series rule: the sum diverges iff
    /// `alpha ≤ 1` and the squared sum converges iff `alpha > 1/2`,
    /// independently of `a > 0` and `b ≥ 0`. A custom finite list has a
    /// finite sum (its tail is constant only by the repeat convention, which
    /// the classification ignores) and is reported as non-divergent and
    /// square-summable.
    pub fn check_h2(&self) -> H2Classification {
        match self {
            Self::PowerLaw { alpha, .. } => H2Classification {
                divergent_sum: *alpha <= 1.0,
                square_summable: *alpha > 0.5,
            },
            Self::Custom(_) => H2Classification {
                divergent_sum: false,
                square_summable: true,
            },
        }
    }
}

/// Radius growth law for a compact family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Growth {
    /// `r_j = r0 · rho^j`, `rho > 1`.
    Geometric(f64),
    /// `r_j = r0 + step · j`, `step > 0`.
    Arithmetic(f64),
}

/// Strictly nested closed balls `K_j = B̄(center, r_j)` exhausting `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactFamily {
    center: Vec<f64>,
    r0: f64,
    growth: Growth,
}

impl CompactFamily {
    pub fn new(center: Vec<f64>, r0: f64, growth: Growth) -> Result<Self, ScheduleError> {
        if !center.iter().all(|c| c.is_finite()) {
            return Err(ScheduleError::NonFiniteCenter);
        }
        if !(r0 > 0.0) || !r0.is_finite() {
            return Err(ScheduleError::InvalidRadius(r0));
        }
        match growth {
            Growth::Geometric(rho) if !(rho > 1.0) || !rho.is_finite() => {
                return Err(ScheduleError::InvalidGrowthRatio(rho))
            }
            Growth::Arithmetic(step) if !(step > 0.0) || !step.is_finite() => {
                return Err(ScheduleError::InvalidGrowthStep(step))
            }
            _ => {}
        }
        Ok(Self { center, r0, growth })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// Radius of `K_j`. Strictly increasing and unbounded in `j`; may reach
    /// `f64::INFINITY` for very large geometric indices, which still behaves
    /// correctly in membership tests.
    #[inline]
    pub fn radius(&self, j: u32) -> f64 {
        match self.growth {
            Growth::Geometric(rho) => self.r0 * rho.powi(j as i32),
            Growth::Arithmetic(step) => self.r0 + step * j as f64,
        }
    }

    /// Closed-ball membership: `‖x − center‖ ≤ r_j`. Boundary points count
    /// as inside.
    #[inline]
    pub fn contains(&self, j: u32, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.dim());
        dist(x, &self.center) <= self.radius(j)
    }

    /// Smallest `j` with `x ∈ K_j`; exists because the radii are unbounded.
    pub fn index_containing(&self, x: &[f64]) -> u32 {
        debug_assert_eq!(x.len(), self.dim());
        let d = dist(x, &self.center);
        debug_assert!(d.is_finite(), "membership index of a non-finite point");
        if d <= self.r0 {
            return 0;
        }
        // Closed-form guess, then settle to the exact minimum to be robust
        // against floating-point rounding in log/div.
        let mut j = match self.growth {
            Growth::Geometric(rho) => (d / self.r0).ln() / rho.ln(),
            Growth::Arithmetic(step) => (d - self.r0) / step,
        }
        .ceil()
        .max(0.0) as u32;
        while j > 0 && self.contains(j - 1, x) {
            j -= 1;
        }
        while !self.contains(j, x) {
            j += 1;
        }
        j
    }
}
