//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`seeded`], which returns a
//! ChaCha8 stream generator. ChaCha8 output is specified bit-for-bit and does
//! not depend on platform or word size, so operator construction, network
//! initialization and noise draws replay exactly from their seeds.
//!
//! Normal variates come from `rand_distr::StandardNormal` (ziggurat).
//!
//! Derived seeds use a SplitMix64 finalizer folded over the stream labels:
//! `derive_seed(base, &[a, b])` is a pure function, and a new label never
//! perturbs the seeds already derived for other labels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(mix64(base), |acc, &label| mix64(acc ^ mix64(label)))
}

/// FNV-1a, used to turn string labels (task names) into seed labels.
pub fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}
