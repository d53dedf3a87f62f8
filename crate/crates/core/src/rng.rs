//! Counter-based deterministic random numbers.
//!
//! Every draw is a pure function of `(seed, index)`, so sample `i` of a run
//! is addressable without replaying the stream and results are bit-exact
//! across platforms and thread counts. The generator is SplitMix64:
//!
//! ```text
//!     output(i) = mix64(seed + (i + 1) * 0x9E3779B97F4A7C15)
//!     f64(i)    = (output(i) >> 11) * 2^-53        // in [0, 1)
//! ```
//!
//! where `mix64` is the standard xor-shift/multiply finalizer below.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic counter-based generator. `Clone` copies the position.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed, counter: 0 }
    }

    /// Independent stream derived from the same seed; streams with different
    /// tags never collide with each other or with the root stream.
    pub fn stream(seed: u64, tag: u64) -> Self {
        CounterRng { seed: mix64(seed ^ mix64(tag ^ 0xA076_1D64_78BD_642F)), counter: 0 }
    }

    /// Draw `i` of this stream, independent of the current position.
    #[inline]
    pub fn nth_u64(&self, i: u64) -> u64 {
        mix64(self.seed.wrapping_add((i.wrapping_add(1)).wrapping_mul(GAMMA)))
    }

    /// Draw `i` mapped to `[0, 1)` with 53 uniform bits.
    #[inline]
    pub fn nth_f64(&self, i: u64) -> f64 {
        (self.nth_u64(i) >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = self.nth_u64(self.counter);
        self.counter += 1;
        v
    }

    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        let v = self.nth_f64(self.counter);
        self.counter += 1;
        v
    }

    /// Uniform draw on `[lo, hi)`.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in `0..n`; `n` must be positive.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_f64() * n as f64) as usize).min(n - 1)
    }
}
