//! Deterministic seed derivation.
//!
//! Every random stream in the crate is derived from a single master seed, a
//! static label naming the consumer, and the integer indices of the work item
//! (instance number, sweep cell, repeat, ...).  The derivation is a fixed
//! function of its inputs, so any cell of any experiment can be recomputed in
//! isolation and reproduces the identical stream.
//!
//! Scheme: FNV-1a over the label bytes, folded with the master seed and each
//! index through the SplitMix64 finalizer.  SplitMix64 is a bijective mixer
//! with full avalanche, so distinct (seed, label, indices) triples map to
//! well-separated generator states.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `master`, a consumer `label`, and work-item
/// `indices`.
pub fn derive_seed(master: u64, label: &str, indices: &[u64]) -> u64 {
    let mut h = FNV_OFFSET;
    for &byte in label.as_bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(FNV_PRIME);
    }
    let mut z = splitmix64(h ^ master);
    for &ix in indices {
        z = splitmix64(z ^ splitmix64(ix));
    }
    z
}

/// A ChaCha generator seeded by [`derive_seed`].
pub fn seeded_rng(master: u64, label: &str, indices: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(master, label, indices))
}
