//! Seed hierarchy.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from a
//! master seed and a `(domain, index)` tag. Streams are counter based, so a
//! node's draws never depend on how many numbers another node consumed or on
//! the order in which workers ran.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    /// Spectral frequencies of one dictionary kernel.
    Dictionary = 1,
    /// Dataset shuffling and synthetic noise.
    Data = 2,
    Node = 3,
    Server = 4,
    /// Per-trial algorithm seeds.
    Trial = 5,
    /// Ground-truth function of the synthetic generator.
    SyntheticTarget = 6,
    /// Monte-Carlo resampling in the evaluation oracles.
    Oracle = 7,
}

pub fn substream(master: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((domain as u64) << 48) ^ index);
    rng
}

/// Seed for trial `trial` of an experiment with master seed `master`.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    use rand::RngCore;
    substream(master, Domain::Trial, trial).next_u64()
}
