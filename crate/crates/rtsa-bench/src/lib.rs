//! Benchmark-only crate; see `benches/stepping.rs`.
//!
//! Shared fixtures for the benches live here so they stay in one place.

use rtsa::problems::{NoiseModel, Problem};
use rtsa::schedules::{CompactFamily, GainSchedule, Growth};

/// Standard cubic fixture used across the benches.
pub fn cubic_fixture(dim: usize) -> (Problem, GainSchedule, CompactFamily) {
    let problem = Problem::cubic(dim, vec![0.0; dim], NoiseModel::additive(1.0)).unwrap();
    let schedule = GainSchedule::power_law(1.0, 0.0, 1.0).unwrap();
    let compacts = CompactFamily::new(vec![0.0; dim], 2.0, Growth::Geometric(2.0)).unwrap();
    (problem, schedule, compacts)
}
