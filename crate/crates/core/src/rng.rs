//! Seed derivation helpers.
//!
//! Every random decision in the crate draws from a ChaCha stream keyed by a
//! tuple of integers, so results are reproducible across platforms and
//! independent of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fold a sequence of integers into one 64-bit key (splitmix64 finalizer per part).
pub fn mix(parts: &[u64]) -> u64 {
    let mut acc: u64 = 0x243F_6A88_85A3_08D3;
    for &p in parts {
        acc ^= splitmix(p.wrapping_add(acc.rotate_left(17)));
        acc = splitmix(acc);
    }
    acc
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A fresh generator keyed by `parts`.
pub fn keyed(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(parts))
}
