//! Counter-based random streams.
//!
//! A [`RngStream`] is a 64-bit stream key plus a draw counter; each output is
//! a SplitMix64-style finalizer applied to `key ^ counter`. Child streams are
//! derived from a parent key and an integer label without consuming draws
//! from the parent, so any lane can reconstruct the stream for
//! `(seed, step, sweep, domain)` on its own. That property is what makes the
//! parallel sweep independent of scheduling.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a textual label into a derivation key.
pub fn label(name: &str) -> u64 {
    // FNV-1a
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    key: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        let key = mix64(seed.wrapping_add(GOLDEN));
        Self { key, counter: 0 }
    }

    /// Child stream identified by `label`; the parent is left untouched.
    pub fn derive(&self, label: u64) -> Self {
        let key = mix64(self.key ^ mix64(label.wrapping_mul(GOLDEN) ^ 0xD134_2543_DE82_EF95));
        Self { key, counter: 0 }
    }

    pub fn derive_str(&self, name: &str) -> Self {
        self.derive(label(name))
    }

    /// Number of 64-bit draws taken so far.
    pub fn position(&self) -> u64 {
        self.counter
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key ^ self.counter.wrapping_mul(GOLDEN))
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` by widening multiply. The bias is at most
    /// `n / 2^64`, far below anything a lattice simulation can resolve.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
