//! Synthetic stochastic root-finding problems.
//!
//! A [`Problem`] bundles an exact mean field `u: R^d → R^d`, its unique root
//! `x*`, and a noise model defining the oracle `U(x, Z) = u(x) + noise(x)·g`
//! with `g` standard normal per coordinate. Carrying the exact `u` lets the
//! stepping engines record the true drift / martingale-increment
//! decomposition at every step instead of estimating it.
//!
//! Built-in mean fields:
//!
//! * `linear` — `u(x) = A(x − x*)` with `A` symmetric positive definite; the
//!   monotonicity condition holds globally since
//!   `(u(x) | x − x*) = (x−x*)ᵀA(x−x*) > 0`.
//! * `cubic` — `u(x) = ‖x−x*‖²(x−x*)`; super-linear growth, the regime where
//!   plain Robbins–Monro blows up but the truncated algorithm does not.
//!   `E‖U(x,Z)‖²` grows like `‖x‖⁶`: finite on compacts, far beyond the
//!   classic quadratic growth bound.
//! * `convex_potential` — `u = ∇V` for the strictly convex
//!   `V(x) = ¼‖x‖⁴ + ½‖x‖²`, i.e. `u(x) = (‖x‖² + 1)x` with root 0.
//! * `adversarial` — `u(x) = −x`, a deliberate monotonicity violation used
//!   to prove the hypothesis checkers can fail.
//!
//! The hypothesis checkers are samplers, not verifiers: a pass is evidence
//! on the sampled set, not a proof over `R^d`.

use thiserror::Error;

use crate::rng::NormalSource;
use crate::vecmath::{cholesky, dot, norm, norm_sq, sub};

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("dimension must be at least 1")]
    ZeroDim,
    #[error("{what} has length {got}, expected dim {dim}")]
    DimMismatch {
        what: &'static str,
        got: usize,
        dim: usize,
    },
    #[error("matrix spec is not symmetric positive definite")]
    NotSpd,
    #[error("noise sigma must be nonnegative and finite, got {0}")]
    InvalidSigma(f64),
    #[error("root coordinates must be finite")]
    NonFiniteRoot,
}

/// How oracle noise scales with the query point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// `U(x,Z) = u(x) + σ·g`
    AdditiveGaussian,
    /// `U(x,Z) = u(x) + σ(1 + ‖x‖²)·g`; stresses the compact-boundedness of
    /// the second moment without violating it.
    StateScaledGaussian,
}

/// Zero-mean Gaussian noise model. Unbiasedness makes the oracle error a
/// martingale increment; both kinds have `E‖U(x,Z)‖²` continuous in `x` and
/// hence bounded on compacts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub sigma: f64,
}

impl NoiseModel {
    pub fn additive(sigma: f64) -> Self {
        Self {
            kind: NoiseKind::AdditiveGaussian,
            sigma,
        }
    }

    pub fn state_scaled(sigma: f64) -> Self {
        Self {
            kind: NoiseKind::StateScaledGaussian,
            sigma,
        }
    }

    /// Per-coordinate noise standard deviation at `x`.
    #[inline]
    pub fn scale(&self, x: &[f64]) -> f64 {
        match self.kind {
            NoiseKind::AdditiveGaussian => self.sigma,
            NoiseKind::StateScaledGaussian => self.sigma * (1.0 + norm_sq(x)),
        }
    }

    fn validate(&self) -> Result<(), ProblemError> {
        if self.sigma.is_finite() && self.sigma >= 0.0 {
            Ok(())
        } else {
            Err(ProblemError::InvalidSigma(self.sigma))
        }
    }
}

/// Specification of the SPD matrix for the linear problem.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixSpec {
    Identity,
    Diagonal(Vec<f64>),
    /// Row-major `dim × dim` entries.
    Dense(Vec<f64>),
}

/// Validated symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    dim: usize,
    rows: Vec<f64>,
}

impl SpdMatrix {
    /// Validates symmetry and positive definiteness (via a successful
    /// Cholesky factorization).
    pub fn from_spec(dim: usize, spec: &MatrixSpec) -> Result<Self, ProblemError> {
        let rows = match spec {
            MatrixSpec::Identity => {
                let mut m = vec![0.0; dim * dim];
                for i in 0..dim {
                    m[i * dim + i] = 1.0;
                }
                m
            }
            MatrixSpec::Diagonal(d) => {
                if d.len() != dim {
                    return Err(ProblemError::DimMismatch {
                        what: "matrix diagonal",
                        got: d.len(),
                        dim,
                    });
                }
                let mut m = vec![0.0; dim * dim];
                for i in 0..dim {
                    m[i * dim + i] = d[i];
                }
                m
            }
            MatrixSpec::Dense(entries) => {
                if entries.len() != dim * dim {
                    return Err(ProblemError::DimMismatch {
                        what: "dense matrix",
                        got: entries.len(),
                        dim: dim * dim,
                    });
                }
                entries.clone()
            }
        };
        let symmetric = (0..dim).all(|i| {
            (0..i).all(|j| (rows[i * dim + j] - rows[j * dim + i]).abs() <= 1e-12)
        });
        if !symmetric || cholesky(dim, &rows).is_none() {
            return Err(ProblemError::NotSpd);
        }
        Ok(Self { dim, rows })
    }

    #[inline]
    fn mul_into(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..self.dim {
            out[i] = dot(&self.rows[i * self.dim..(i + 1) * self.dim], v);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum MeanField {
    Linear(SpdMatrix),
    Cubic,
    ConvexPotential,
    NegatedIdentity,
}

/// A stochastic oracle with known mean field and root.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    name: String,
    dim: usize,
    root: Vec<f64>,
    field: MeanField,
    noise: NoiseModel,
}

impl Problem {
    /// `u(x) = A(x − x*)` with `A` symmetric positive definite.
    pub fn linear(
        dim: usize,
        spec: MatrixSpec,
        x_star: Vec<f64>,
        noise: NoiseModel,
    ) -> Result<Self, ProblemError> {
        let matrix = SpdMatrix::from_spec(Self::checked_dim(dim)?, &spec)?;
        Ok(Self {
            name: "linear".into(),
            dim,
            root: Self::checked_root(dim, x_star)?,
            field: MeanField::Linear(matrix),
            noise: Self::checked_noise(noise)?,
        })
    }

    /// `u(x) = ‖x − x*‖²(x − x*)`; reduces to `(x − x*)³` in one dimension.
    pub fn cubic(dim: usize, x_star: Vec<f64>, noise: NoiseModel) -> Result<Self, ProblemError> {
        Ok(Self {
            name: "cubic".into(),
            dim: Self::checked_dim(dim)?,
            root: Self::checked_root(dim, x_star)?,
            field: MeanField::Cubic,
            noise: Self::checked_noise(noise)?,
        })
    }

    /// Gradient of the strictly convex `V(x) = ¼‖x‖⁴ + ½‖x‖²`:
    /// `u(x) = (‖x‖² + 1)x`, root at the origin.
    pub fn convex_potential(dim: usize, noise: NoiseModel) -> Result<Self, ProblemError> {
        Ok(Self {
            name: "convex_potential".into(),
            dim: Self::checked_dim(dim)?,
            root: vec![0.0; dim],
            field: MeanField::ConvexPotential,
            noise: Self::checked_noise(noise)?,
        })
    }

    /// `u(x) = −x`: drift points away from the root, violating the
    /// monotonicity condition everywhere. Fixture for checker tests.
    pub fn adversarial(dim: usize, noise: NoiseModel) -> Result<Self, ProblemError> {
        Ok(Self {
            name: "adversarial".into(),
            dim: Self::checked_dim(dim)?,
            root: vec![0.0; dim],
            field: MeanField::NegatedIdentity,
            noise: Self::checked_noise(noise)?,
        })
    }

    fn checked_dim(dim: usize) -> Result<usize, ProblemError> {
        if dim == 0 {
            Err(ProblemError::ZeroDim)
        } else {
            Ok(dim)
        }
    }

    fn checked_root(dim: usize, root: Vec<f64>) -> Result<Vec<f64>, ProblemError> {
        if root.len() != dim {
            return Err(ProblemError::DimMismatch {
                what: "x_star",
                got: root.len(),
                dim,
            });
        }
        if !root.iter().all(|c| c.is_finite()) {
            return Err(ProblemError::NonFiniteRoot);
        }
        Ok(root)
    }

    fn checked_noise(noise: NoiseModel) -> Result<NoiseModel, ProblemError> {
        noise.validate()?;
        Ok(noise)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root(&self) -> &[f64] {
        &self.root
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// Exact mean field `u(x)`.
    pub fn mean_field(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.mean_field_into(x, &mut out);
        out
    }

    /// Exact mean field written into `out` without allocating.
    #[inline]
    pub fn mean_field_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        match &self.field {
            MeanField::Linear(a) => {
                // out = A (x - x*); reuse out as the shifted vector first.
                let mut shifted = [0.0; 8];
                if self.dim <= shifted.len() {
                    let s = &mut shifted[..self.dim];
                    for i in 0..self.dim {
                        s[i] = x[i] - self.root[i];
                    }
                    a.mul_into(s, out);
                } else {
                    let s = sub(x, &self.root);
                    a.mul_into(&s, out);
                }
            }
            MeanField::Cubic => {
                let mut r2 = 0.0;
                for i in 0..self.dim {
                    let d = x[i] - self.root[i];
                    r2 += d * d;
                }
                for i in 0..self.dim {
                    out[i] = r2 * (x[i] - self.root[i]);
                }
            }
            MeanField::ConvexPotential => {
                let f = norm_sq(x) + 1.0;
                for i in 0..self.dim {
                    out[i] = f * x[i];
                }
            }
            MeanField::NegatedIdentity => {
                for i in 0..self.dim {
                    out[i] = -x[i];
                }
            }
        }
    }

    /// One oracle draw `U(x, z) = u(x) + scale(x)·g`, consuming exactly
    /// `dim` standard normals from the stream.
    pub fn sample_oracle<R: NormalSource>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let mut drift = vec![0.0; self.dim];
        self.mean_field_into(x, &mut drift);
        let mut noise = vec![0.0; self.dim];
        self.sample_noise_into(x, rng, &mut noise);
        for i in 0..self.dim {
            drift[i] += noise[i];
        }
        drift
    }

    /// Draw the zero-mean noise term `U(x,Z) − u(x)` into `out`.
    ///
    /// Both noise kinds are additive given `x`, so this vector is exactly
    /// the martingale increment of the step that uses it.
    #[inline]
    pub fn sample_noise_into<R: NormalSource>(&self, x: &[f64], rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        rng.fill_standard_normal(out);
        let scale = self.noise.scale(x);
        for g in out.iter_mut() {
            *g *= scale;
        }
    }

    /// Analytic `E‖U(x,Z)‖² = ‖u(x)‖² + d·scale(x)²`.
    pub fn second_moment(&self, x: &[f64]) -> f64 {
        let u = self.mean_field(x);
        let s = self.noise.scale(x);
        norm_sq(&u) + self.dim as f64 * s * s
    }
}

/// Where to probe when sampling the monotonicity condition.
#[derive(Debug, Clone)]
pub struct SphereSampler {
    /// Radii of spheres centered at the root.
    pub radii: Vec<f64>,
    /// Points per sphere. Dimension 1 always uses the two endpoints;
    /// dimension 2 uses an even angular grid; higher dimensions use
    /// deterministic pseudorandom directions from `seed`.
    pub points_per_radius: usize,
    pub seed: u64,
}

impl SphereSampler {
    pub fn new(radii: Vec<f64>, points_per_radius: usize) -> Self {
        Self {
            radii,
            points_per_radius,
            seed: 0,
        }
    }
}

/// Outcome of sampling `(u(x) | x − x*)` around the root.
#[derive(Debug, Clone)]
pub struct H1Report {
    /// Smallest sampled inner product.
    pub min_inner_product: f64,
    /// Point achieving the minimum.
    pub argmin: Vec<f64>,
    /// Sampled points with inner product ≤ 0 (capped at 16 entries).
    pub violations: Vec<(Vec<f64>, f64)>,
    /// Total number of violating points, including those beyond the cap.
    pub violation_count: usize,
    pub points_sampled: usize,
}

impl H1Report {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

/// Sample the Lyapunov-type monotonicity condition `(u(x) | x − x*) > 0`
/// on spheres around the root. A falsification check, not a proof.
pub fn check_h1(problem: &Problem, sampler: &SphereSampler) -> H1Report {
    let d = problem.dim();
    let mut report = H1Report {
        min_inner_product: f64::INFINITY,
        argmin: vec![],
        violations: vec![],
        violation_count: 0,
        points_sampled: 0,
    };
    let mut dir_rng = crate::rng::CounterRng::new(sampler.seed ^ 0x5105_1e5a);
    for &r in &sampler.radii {
        if !(r > 0.0) {
            continue;
        }
        let directions = sphere_directions(d, sampler.points_per_radius, &mut dir_rng);
        for dir in directions {
            let x: Vec<f64> = problem
                .root()
                .iter()
                .zip(&dir)
                .map(|(c, u)| c + r * u)
                .collect();
            let offset = sub(&x, problem.root());
            let ip = dot(&problem.mean_field(&x), &offset);
            report.points_sampled += 1;
            if ip < report.min_inner_product {
                report.min_inner_product = ip;
                report.argmin = x.clone();
            }
            if ip <= 0.0 {
                report.violation_count += 1;
                if report.violations.len() < 16 {
                    report.violations.push((x, ip));
                }
            }
        }
    }
    report
}

fn sphere_directions(
    d: usize,
    count: usize,
    rng: &mut crate::rng::CounterRng,
) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count.max(1))
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / count.max(1) as f64;
                vec![theta.cos(), theta.sin()]
            })
            .collect(),
        _ => (0..count.max(1))
            .map(|_| {
                let mut v = vec![0.0; d];
                loop {
                    rng.fill_standard_normal(&mut v);
                    let n = norm(&v);
                    if n > 1e-12 {
                        for c in v.iter_mut() {
                            *c /= n;
                        }
                        return v;
                    }
                }
            })
            .collect(),
    }
}

/// Monte Carlo probe of the local second-moment bound.
#[derive(Debug, Clone)]
pub struct H3Report {
    /// Largest estimated `E‖U(x,Z)‖²` over the probed points.
    pub max_second_moment_estimate: f64,
    /// Standard error of the estimate at the maximizing point.
    pub standard_error_at_max: f64,
    /// Point achieving the maximum.
    pub argmax: Vec<f64>,
    pub points_probed: usize,
    pub samples_per_point: usize,
}

impl H3Report {
    /// The sampled estimate can only falsify boundedness by blowing up.
    pub fn passed(&self) -> bool {
        self.max_second_moment_estimate.is_finite()
    }
}

/// Estimate `E‖U(x,Z)‖²` on a grid of spheres inside the ball
/// `B̄(x*, compact_radius)` and report the maximum with its standard error.
pub fn check_h3<R: NormalSource>(
    problem: &Problem,
    compact_radius: f64,
    n_samples: usize,
    rng: &mut R,
) -> H3Report {
    assert!(n_samples >= 2, "need at least two samples for an SE");
    let d = problem.dim();
    let mut dir_rng = crate::rng::CounterRng::new(0x7e57_ba11);
    let mut report = H3Report {
        max_second_moment_estimate: f64::NEG_INFINITY,
        standard_error_at_max: 0.0,
        argmax: vec![],
        points_probed: 0,
        samples_per_point: n_samples,
    };
    let fractions = [0.25, 0.5, 0.75, 1.0];
    let mut points: Vec<Vec<f64>> = vec![problem.root().to_vec()];
    for &f in &fractions {
        let r = f * compact_radius;
        for dir in sphere_directions(d, if d == 2 { 16 } else { 8 }, &mut dir_rng) {
            points.push(
                problem
                    .root()
                    .iter()
                    .zip(&dir)
                    .map(|(c, u)| c + r * u)
                    .collect(),
            );
        }
    }
    let mut draw = vec![0.0; d];
    for x in points {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut drift = vec![0.0; d];
        problem.mean_field_into(&x, &mut drift);
        for _ in 0..n_samples {
            problem.sample_noise_into(&x, rng, &mut draw);
            let mut s = 0.0;
            for i in 0..d {
                let v = drift[i] + draw[i];
                s += v * v;
            }
            sum += s;
            sum_sq += s * s;
        }
        let mean = sum / n_samples as f64;
        let var = (sum_sq / n_samples as f64 - mean * mean).max(0.0);
        let se = (var / n_samples as f64).sqrt();
        report.points_probed += 1;
        if mean > report.max_second_moment_estimate {
            report.max_second_moment_estimate = mean;
            report.standard_error_at_max = se;
            report.argmax = x;
        }
    }
    report
}
