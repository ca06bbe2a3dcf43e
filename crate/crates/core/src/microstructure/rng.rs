//! Counter-based 64-bit random streams.
//!
//! Every draw is a pure function of `(key, counter)`: the `i`-th value of a
//! stream is the SplitMix64 finalizer applied to `key + (i + 1) * GOLDEN`.
//! Realization streams are keyed by [`derive_seed`], so any realization can be
//! regenerated alone, in any order, on any thread.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of realization `index` under a base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix64(base ^ mix64(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Maps a raw 64-bit word onto the open interval `(0, 1)`.
///
/// Only the top 52 bits are kept so that `j + 1/2` and the result are exact
/// in `f64`: the extreme values are `2^-53` and `1 - 2^-53`.
#[inline]
pub fn open_unit(word: u64) -> f64 {
    ((word >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { key: mix64(seed) }
    }

    #[inline]
    pub fn word_at(&self, counter: u64) -> u64 {
        mix64(self.key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    #[inline]
    pub fn open_unit_at(&self, counter: u64) -> f64 {
        open_unit(self.word_at(counter))
    }
}
