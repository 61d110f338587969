//! Seed derivation for reproducible runs.
//!
//! Every random stream in the simulator is a `ChaCha8Rng` keyed by a base
//! seed plus a path of stream identifiers (round, client id, ...), so results
//! never depend on the order in which independent work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a stream path into a base seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}

// Stream tags, kept distinct so unrelated draws never share a sequence.
pub(crate) const TAG_INIT: u64 = 0x1;
pub(crate) const TAG_BATCHES: u64 = 0x2;
pub(crate) const TAG_SCENARIO: u64 = 0x3;
pub(crate) const TAG_DATA: u64 = 0x4;
pub(crate) const TAG_PARTITION: u64 = 0x5;
pub(crate) const TAG_PAIRING: u64 = 0x6;
pub(crate) const TAG_SL_ORDER: u64 = 0x7;
