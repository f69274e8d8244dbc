//! Minimal deterministic pseudo-random generator.
//!
//! Mesh perturbation and the randomized checks in the test suite must be
//! reproducible bit-for-bit across runs and platforms, so we keep a tiny
//! fixed generator here instead of depending on an external crate whose
//! stream could change between versions.

/// SplitMix64 generator (Steele, Lea, Flood 2014).
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Derive an independent stream for a keyed subobject (e.g. one mesh
    /// vertex). Streams for different keys never share state.
    pub fn stream(seed: u64, key: u64) -> Self {
        let mut base = Self::new(seed);
        let a = base.next_u64();
        Self::new(a ^ key.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[-r, r]`.
    pub fn next_symmetric(&mut self, r: f64) -> f64 {
        (2.0 * self.next_f64() - 1.0) * r
    }

    /// Uniform in `(lo, hi)`, kept strictly inside the open interval.
    pub fn next_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}
