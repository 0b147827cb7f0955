//! Deterministic, splittable pseudo-random number generation.
//!
//! Every stochastic subsystem (worldgen, creature dynamics, policy sampling,
//! minibatch shuffling) owns a named stream derived from one master seed.
//! Streams are counter-based: the state is `key = mix(seed ^ hash(label))`
//! and the i-th output is `mix(key + i * PHI)`, so streams can be split and
//! handed to parallel workers without coordination, and consuming draws from
//! one stream never perturbs another.
//!
//! This is a SplitMix64-style generator (Stafford mix13 finalizer). It is
//! **not** cryptographic.

use serde::{Deserialize, Serialize};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer (Stafford variant 13).
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a 64-bit hash of the stream label.
fn hash_label(label: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// A named counter-based random stream.
///
/// Identical `(master_seed, label)` pairs produce identical sequences;
/// distinct labels under the same master seed produce independent sequences.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RngStream {
    master_seed: u64,
    label: String,
    key: u64,
    counter: u64,
}

impl RngStream {
    /// Derive a stream from a master seed and a non-empty label.
    ///
    /// Pure function of its inputs: re-deriving yields the same sequence.
    pub fn derive(master_seed: u64, label: &str) -> Self {
        assert!(!label.is_empty(), "stream label must be non-empty");
        let key = mix64(master_seed ^ mix64(hash_label(label)));
        Self {
            master_seed,
            label: label.to_owned(),
            key,
            counter: 0,
        }
    }

    /// Derive a child stream; equivalent to `derive(master_seed, "parent/label")`.
    pub fn child(&self, label: &str) -> Self {
        Self::derive(self.master_seed, &format!("{}/{}", self.label, label))
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Next raw 64-bit output; advances the counter by one.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let z = self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA));
        self.counter += 1;
        mix64(z)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased integer draw in `[0, n)` by rejection sampling: draws whose
    /// value falls in the truncated tail `[n * floor(2^64 / n), 2^64)` are
    /// discarded, so every residue is equally likely (no modulo bias).
    ///
    /// Panics if `n == 0`.
    #[inline]
    pub fn next_int_below(&mut self, n: u64) -> u64 {
        assert!(n >= 1, "next_int_below requires n >= 1");
        if n == 1 {
            // Still consume a draw so call patterns stay stream-stable.
            self.next_u64();
            return 0;
        }
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Bernoulli draw with probability `p`.
    #[inline]
    pub fn next_bool(&mut self, p: f64) -> bool {
        self.next_uniform() < p
    }

    /// Standard normal draw via Box-Muller (consumes two uniforms).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_uniform().max(f64::MIN_POSITIVE);
        let u2 = self.next_uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_int_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
