//! Seed derivation.
//!
//! A run's master seed is split into independent sub-streams keyed by
//! component, so swapping one component (say, the agent kind) leaves the
//! draws of every other component untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Component tags for sub-stream derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Scenario = 1,
    Markov = 2,
    Fading = 3,
    Sensing = 4,
    Exploration = 5,
    AgentInit = 6,
    Evaluation = 7,
    Sweep = 8,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one well-mixed seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &p| mix64(acc ^ mix64(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn seed(&self, stream: Stream, index: u64) -> u64 {
        derive_seed(&[self.master, stream as u64, index])
    }

    pub fn rng(&self, stream: Stream, index: u64) -> SimRng {
        SimRng::seed_from_u64(self.seed(stream, index))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let tree = SeedTree::new(42);
        let a: u64 = tree.rng(Stream::Markov, 0).random();
        let b: u64 = tree.rng(Stream::Markov, 0).random();
        let c: u64 = tree.rng(Stream::Sensing, 0).random();
        let d: u64 = tree.rng(Stream::Markov, 1).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
