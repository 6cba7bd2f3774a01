//! Deterministic counter-based random streams.
//!
//! Reproducibility across reruns and across worker counts requires that every
//! trajectory own a stream that is a pure function of `(master_seed,
//! trajectory_index, draw_counter)` — no global state, no dependence on
//! scheduling order. The generator here is the splitmix64 finalizer applied
//! to a keyed counter, the same construction used by counter-based
//! simulation RNGs.
//!
//! Draw accounting is part of the contract: standard normals are produced by
//! the Box–Muller transform, consuming exactly two `u64` draws (two
//! uniforms) per pair of normals. Filling a buffer of odd length `d`
//! consumes `d + 1` normals worth of uniforms and discards the spare, so the
//! number of raw draws per oracle call is a fixed function of the dimension.

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 output function: a bijective mix of 64 bits.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the stream key for one trajectory of an ensemble.
///
/// This is the `i`-th output of a splitmix64 generator seeded with
/// `master_seed`, so distinct indices give statistically independent keys
/// and the derivation is independent of execution order.
#[inline]
pub fn derive_trajectory_seed(master_seed: u64, trajectory_index: u64) -> u64 {
    mix64(master_seed.wrapping_add(trajectory_index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Source of i.i.d. standard normal variates.
///
/// The stepping engines are generic over this trait so tests can force
/// exact noise realizations (including zero noise and non-finite values).
pub trait NormalSource {
    /// Fill `out` with standard normal draws, advancing the source.
    fn fill_standard_normal(&mut self, out: &mut [f64]);
}

/// Keyed counter-based generator.
///
/// `next_u64` for counter `c` is `mix64(key + c·GOLDEN_GAMMA)`; the state is
/// just `(key, counter)`, so streams can be cloned, compared, and replayed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    /// Stream with the given key, positioned at its first draw.
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    /// Stream for trajectory `index` of an ensemble keyed by `master_seed`.
    pub fn for_trajectory(master_seed: u64, index: u64) -> Self {
        Self::new(derive_trajectory_seed(master_seed, index))
    }

    /// Number of raw `u64` draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.counter
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform draw in the half-open interval `(0, 1]`.
    ///
    /// The lower endpoint is excluded so `ln(u)` in Box–Muller is always
    /// finite.
    #[inline]
    pub fn uniform_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// One pair of independent standard normals (Box–Muller), consuming
    /// exactly two uniform draws.
    #[inline]
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform_open01();
        let u2 = self.uniform_open01();
        let mag = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (mag * theta.cos(), mag * theta.sin())
    }
}

impl NormalSource for CounterRng {
    fn fill_standard_normal(&mut self, out: &mut [f64]) {
        let mut i = 0;
        while i + 1 < out.len() {
            let (a, b) = self.normal_pair();
            out[i] = a;
            out[i + 1] = b;
            i += 2;
        }
        if i < out.len() {
            // Odd tail: consume a full pair, keep the first normal.
            let (a, _) = self.normal_pair();
            out[i] = a;
        }
    }
}

/// Test source replaying a fixed cycle of values.
///
/// Lets tests pin the exact noise a step sees: zeros for noise-free
/// arithmetic checks, specific values for forced-truncation scenarios, or
/// NaN to exercise the abort path.
#[derive(Debug, Clone)]
pub struct ForcedNormals {
    values: Vec<f64>,
    cursor: usize,
}

impl ForcedNormals {
    /// Cycle through `values` forever.
    pub fn cycle(values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "forced source needs at least one value");
        Self { values, cursor: 0 }
    }

    /// Source that always returns zero (noise-free oracle).
    pub fn zeros() -> Self {
        Self::cycle(vec![0.0])
    }
}

impl NormalSource for ForcedNormals {
    fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for slot in out {
            *slot = self.values[self.cursor];
            self.cursor = (self.cursor + 1) % self.values.len();
        }
    }
}
