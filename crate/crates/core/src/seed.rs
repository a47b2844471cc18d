//! Seed derivation.
//!
//! Every random quantity in the crate is drawn from a `ChaCha20Rng` seeded
//! with `seed_from_u64`. Sub-streams are derived from a parent seed with the
//! fixed rules below so that any piece of an experiment can be regenerated on
//! its own, in any order, on any number of threads.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// XOR mask that separates the class-B stream from the class-A stream.
pub const CLASS_B_MASK: u64 = 0x9E37_79B9_7F4A_7C15;

/// XOR mask for the permutation that interleaves the two classes.
pub const SHUFFLE_MASK: u64 = 0xD1B5_4A32_D192_ED03;

/// Names the generator and normal-variate method, recorded in run metadata.
pub const RNG_DESCRIPTION: &str = "ChaCha20Rng::seed_from_u64 + rand_distr::StandardNormal (ziggurat)";

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// SplitMix64 finaliser; a bijection on `u64` with good avalanche.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th child stream of `parent`.
///
/// Used for per-threshold, per-run and per-grid-point streams.
pub fn child(parent: u64, index: u64) -> u64 {
    mix(parent ^ mix(index.wrapping_add(1)))
}

pub fn class_b(seed: u64) -> u64 {
    seed ^ CLASS_B_MASK
}

pub fn shuffle(seed: u64) -> u64 {
    seed ^ SHUFFLE_MASK
}
