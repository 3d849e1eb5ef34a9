//! Stable seed derivation for replayable Monte Carlo trials.
//!
//! Every trial owns a ChaCha8 stream keyed by a 64-bit seed obtained by
//! mixing `(master, point, trial)`. The mixer is the SplitMix64 finalizer,
//! so the mapping is stable across platforms and worker counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type used for every stochastic operation in the crate.
pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combine a parent seed with a child index.
pub fn derive(parent: u64, index: u64) -> u64 {
    mix64(parent ^ mix64(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Seed identifying one grid point of a sweep.
pub fn point_seed(master: u64, point: usize) -> u64 {
    derive(master, point as u64)
}

/// Seed for a single trial at a grid point.
pub fn trial_seed(master: u64, point: usize, trial: usize) -> u64 {
    derive(point_seed(master, point), trial as u64)
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
