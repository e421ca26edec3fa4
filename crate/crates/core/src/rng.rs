//! Seeded, portable random number generation.
//!
//! Every random quantity in the crate is drawn from [`BellRng`], a ChaCha8
//! stream cipher keyed by a 64-bit [`RngSeed`]. ChaCha8 output is fixed by
//! its published definition, so a seed reproduces the same draws on every
//! platform. Independent purposes (settings, model randomness, derived
//! per-block seeds) use distinct ChaCha stream ids under the same key.
//!
//! Primitive draws are defined bit-exactly so that other implementations can
//! replay them:
//!
//! * [`BellRng::next_u64`]: the next 64-bit ChaCha8 output word pair.
//! * [`BellRng::next_f64`]: `(next_u64 >> 11) * 2^-53`, uniform on `[0, 1)`.
//! * [`BellRng::next_setting_pair`]: one `next_u64`; `x` is bit 0, `y` is bit 1.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

/// Stream used for referee/experimenter setting coin tosses.
pub const SETTINGS_STREAM: u64 = 0;
/// Stream used for the randomness of the model producing outcomes.
pub const MODEL_STREAM: u64 = 1;
/// Derived seeds are taken from streams with the top bit set.
const DERIVE_STREAM_BIT: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// Seed for sub-task `index` (a Monte Carlo block, a session, ...).
    ///
    /// Defined as the first `next_u64` of the stream `2^63 | index` keyed by
    /// this seed, so derived seeds never share a stream with direct draws.
    pub fn derive(self, index: u64) -> RngSeed {
        let mut rng = BellRng::with_stream(self, DERIVE_STREAM_BIT | (index & !DERIVE_STREAM_BIT));
        RngSeed(rng.next_u64())
    }
}

impl From<u64> for RngSeed {
    fn from(v: u64) -> Self {
        RngSeed(v)
    }
}

impl std::fmt::Display for RngSeed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Saved generator position; restoring it resumes the exact draw sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: RngSeed,
    pub stream: u64,
    pub word_pos: u128,
}

#[derive(Debug, Clone)]
pub struct BellRng {
    seed: RngSeed,
    inner: ChaCha8Rng,
}

impl BellRng {
    pub fn new(seed: RngSeed) -> Self {
        Self::with_stream(seed, SETTINGS_STREAM)
    }

    pub fn with_stream(seed: RngSeed, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed.0);
        inner.set_stream(stream);
        BellRng { seed, inner }
    }

    pub fn save(&self) -> RngState {
        RngState {
            seed: self.seed,
            stream: self.inner.get_stream(),
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn restore(state: &RngState) -> Self {
        let mut rng = Self::with_stream(state.seed, state.stream);
        rng.inner.set_word_pos(state.word_pos);
        rng
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_bit(&mut self) -> u8 {
        (self.next_u64() & 1) as u8
    }

    /// Two independent fair bits from a single draw.
    pub fn next_setting_pair(&mut self) -> (u8, u8) {
        let w = self.next_u64();
        ((w & 1) as u8, ((w >> 1) & 1) as u8)
    }

    /// Index into `weights` chosen with probability proportional to weight,
    /// using one `next_f64` draw and a linear cumulative scan.
    pub fn pick_weighted(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let u = self.next_f64() * total;
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        // rounding can leave u == total; fall back to the last positive weight
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = BellRng::new(RngSeed(42));
        let mut b = BellRng::new(RngSeed(42));
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = BellRng::with_stream(RngSeed(42), SETTINGS_STREAM);
        let mut b = BellRng::with_stream(RngSeed(42), MODEL_STREAM);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn save_restore_resumes() {
        let mut rng = BellRng::with_stream(RngSeed(9), 5);
        for _ in 0..17 {
            rng.next_u64();
        }
        let state = rng.save();
        let expected: Vec<u64> = (0..10).map(|_| rng.next_u64()).collect();
        let mut resumed = BellRng::restore(&state);
        let got: Vec<u64> = (0..10).map(|_| resumed.next_u64()).collect();
        assert_eq!(expected, got);
    }

    #[test]
    fn derived_seeds_are_distinct_and_stable() {
        let s = RngSeed(1234);
        assert_eq!(s.derive(3), s.derive(3));
        assert_ne!(s.derive(3), s.derive(4));
        assert_ne!(s.derive(0).0, BellRng::new(s).next_u64());
    }

    #[test]
    fn f64_in_unit_interval() {
        let mut rng = BellRng::new(RngSeed(0));
        for _ in 0..10_000 {
            let u = rng.next_f64();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn weighted_pick_skips_zero_weights() {
        let mut rng = BellRng::new(RngSeed(3));
        for _ in 0..1000 {
            let i = rng.pick_weighted(&[0.0, 1.0, 0.0, 2.0]);
            assert!(i == 1 || i == 3);
        }
    }
}
