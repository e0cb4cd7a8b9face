//! Counter-addressed random tapes.
//!
//! Every random decision is a pure function of `(seed, stream, index)`, so a
//! vertex's coins do not depend on the order in which the simulator visits
//! vertices. This is what lets the pipelined and unpipelined drivers reach
//! the same solution.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream tags. Each algorithmic use of randomness gets its own stream family.
pub mod stream {
    pub const REDUCTION: u64 = 1 << 56;
    pub const FINISHER: u64 = 2 << 56;
    pub const BASELINE: u64 = 3 << 56;
    pub const PARTITION: u64 = 4 << 56;
    pub const ROOTING: u64 = 5 << 56;
}

#[derive(Clone)]
pub struct Tape {
    base: ChaCha8Rng,
}

impl core::fmt::Debug for Tape {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Tape").finish_non_exhaustive()
    }
}

impl Tape {
    pub fn new(seed: u64) -> Self {
        Self { base: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// The `index`-th 64-bit word of stream `stream`.
    pub fn word(&self, stream: u64, index: u64) -> u64 {
        let mut rng = self.base.clone();
        rng.set_stream(stream);
        rng.set_word_pos(u128::from(index) * 2);
        rng.next_u64()
    }

    /// Uniform integer in `0..bound` (`bound > 0`), by multiply-shift.
    pub fn below(&self, stream: u64, index: u64, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        ((u128::from(self.word(stream, index)) * u128::from(bound)) >> 64) as u64
    }

    /// A fair coin.
    pub fn coin(&self, stream: u64, index: u64) -> bool {
        self.word(stream, index) >> 63 == 1
    }

    /// Uniform real in `[0, 1)`.
    pub fn unit(&self, stream: u64, index: u64) -> f64 {
        (self.word(stream, index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Stream id for a `(phase, execution)` pair of the degree-reduction step.
pub fn reduction_stream(phase: u32, execution: u32) -> u64 {
    stream::REDUCTION | (u64::from(phase) << 32) | u64::from(execution)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_are_order_independent() {
        let t = Tape::new(7);
        let a = t.word(3, 10);
        let _ = t.word(3, 11);
        assert_eq!(a, t.word(3, 10));
        assert_ne!(t.word(3, 10), t.word(4, 10));
        assert_ne!(Tape::new(8).word(3, 10), a);
    }

    #[test]
    fn below_stays_in_range() {
        let t = Tape::new(1);
        for i in 0..1000 {
            assert!(t.below(0, i, 7) < 7);
        }
        let ones = (0..4000).filter(|&i| t.coin(9, i)).count();
        assert!((1700..2300).contains(&ones));
    }
}
