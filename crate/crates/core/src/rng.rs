//! Deterministic stream derivation. Every randomized operation receives a
//! seed and derives independent sub-streams from `(seed, domain tag,
//! indices)`, so results do not depend on evaluation order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const TAG_COLLECT: u64 = 0x11;
pub(crate) const TAG_SUBMIT: u64 = 0x22;
pub(crate) const TAG_CELL: u64 = 0x33;
pub(crate) const TAG_REPLICATION: u64 = 0x44;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Collapses a seed and a tag list into a single stream key.
pub(crate) fn mix(seed: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ 0xA076_1D64_78BD_642F);
    for &t in tags {
        h = splitmix64(h ^ t);
    }
    h
}

pub(crate) fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, tags))
}
