//! Portable deterministic pseudo-random numbers.
//!
//! Every random choice in the crate (split shuffles, synthetic textures,
//! label shuffles) draws from [`SplitMix64`], so a given seed reproduces the
//! same output on any platform and can be re-implemented bit-exactly in
//! another language:
//!
//! ```text
//! next_u64:  state = state + 0x9E3779B97F4A7C15 (wrapping)
//!            z = state
//!            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!            z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!            return z ^ (z >> 31)
//! next_f64:  (next_u64 >> 11) * 2^-53                      in [0, 1)
//! below(n):  (next_u64 as u128 * n) >> 64                   in [0, n)
//! shuffle:   for i = len-1 down to 1: swap(i, below(i + 1))
//! gaussian:  u1 = 1 - next_f64, u2 = next_f64,
//!            sqrt(-2 ln u1) * cos(2 pi u2)                  (two draws per value)
//! stream(seed, index) = SplitMix64::new(seed ^ mix64(index))
//! ```
//!
//! `mix64` is the output function of `next_u64` applied to its argument.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Independent sub-stream for `index` (a trial number, a patch number).
    pub fn stream(seed: u64, index: u64) -> Self {
        Self::new(seed ^ mix64(index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)`. `bound` must be non-zero.
    pub fn below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as usize
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Standard normal deviate (Box-Muller, cosine branch only).
    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
