//! Hypothesis check runner behind the `check` subcommand.
//!
//! Bundles the three executable checks for a configured problem/schedule
//! pair:
//!
//! * monotonicity of the drift toward the root, sampled on spheres;
//! * gain summability, classified analytically from the exponent;
//! * local boundedness of the oracle's second moment, estimated by Monte
//!   Carlo on the base compact.
//!
//! Passing is evidence, not proof: the first and third checks sample.

use crate::problems::{check_h1, check_h3, H1Report, H3Report, SphereSampler};
use crate::rng::CounterRng;
use crate::schedules::H2Classification;

use super::config::ExperimentConfig;
use super::ensemble::RunError;

/// Combined outcome of the three hypothesis checks.
#[derive(Debug, Clone)]
pub struct HypothesisChecks {
    pub problem: String,
    pub h1: H1Report,
    pub h2: H2Classification,
    pub h3: H3Report,
    /// Human-readable descriptions of every violated hypothesis; empty means
    /// all checks passed.
    pub violations: Vec<String>,
}

impl HypothesisChecks {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Render the report the CLI prints.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("hypothesis checks for problem `{}`\n", self.problem));
        out.push_str(&format!(
            "  H1 monotonicity   : {}  (min inner product {:.6e} over {} points{})\n",
            if self.h1.passed() { "pass" } else { "FAIL" },
            self.h1.min_inner_product,
            self.h1.points_sampled,
            if self.h1.passed() {
                String::new()
            } else {
                format!(", {} violations", self.h1.violation_count)
            }
        ));
        for (x, ip) in &self.h1.violations {
            out.push_str(&format!("      violation at {x:?}: inner product {ip:.6e}\n"));
        }
        out.push_str(&format!(
            "  H2 gain summability: {}  (divergent sum: {}, square summable: {})\n",
            if self.h2.holds() { "pass" } else { "FAIL" },
            self.h2.divergent_sum,
            self.h2.square_summable,
        ));
        out.push_str(&format!(
            "  H3 local 2nd moment: {}  (max estimate {:.6e} ± {:.2e} over {} points × {} samples)\n",
            if self.h3.passed() { "pass" } else { "FAIL" },
            self.h3.max_second_moment_estimate,
            self.h3.standard_error_at_max,
            self.h3.points_probed,
            self.h3.samples_per_point,
        ));
        out.push_str(if self.violations.is_empty() {
            "  verdict: all hypotheses pass on the sampled sets\n"
        } else {
            "  verdict: HYPOTHESIS VIOLATION\n"
        });
        out
    }
}

/// Run all three checks for the configured problem and schedule.
pub fn run_hypothesis_checks(
    config: &ExperimentConfig,
    h3_samples: usize,
) -> Result<HypothesisChecks, RunError> {
    let problem = config.build_problem()?;
    let schedule = config.build_schedule()?;

    let r0 = config.compacts_r0;
    let sampler = SphereSampler {
        radii: vec![0.25 * r0, 0.5 * r0, r0],
        points_per_radius: match config.dim {
            1 => 2,
            2 => 360,
            _ => 256,
        },
        seed: config.master_seed,
    };
    let h1 = check_h1(&problem, &sampler);
    let h2 = schedule.check_h2();
    let mut rng = CounterRng::new(config.master_seed ^ 0x4833_c4ec);
    let h3 = check_h3(&problem, r0, h3_samples.max(2), &mut rng);

    let mut violations = Vec::new();
    if !h1.passed() {
        violations.push(format!(
            "H1: {} sampled points with (u(x) | x - x*) <= 0, minimum {:.6e}",
            h1.violation_count, h1.min_inner_product
        ));
    }
    if !h2.divergent_sum {
        violations.push("H2: gain sum converges (needs alpha <= 1)".to_string());
    }
    if !h2.square_summable {
        violations.push("H2: squared gains not summable (needs alpha > 1/2)".to_string());
    }
    if !h3.passed() {
        violations.push("H3: non-finite second-moment estimate".to_string());
    }

    Ok(HypothesisChecks {
        problem: problem.name().to_string(),
        h1,
        h2,
        h3,
        violations,
    })
}
