//! Seed derivation for reproducible, order-independent random streams.
//!
//! Every consumer of randomness gets its own counter-derived ChaCha stream so
//! results do not depend on scheduling or thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 step, used to decorrelate seeds derived from small integers.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over a byte string; stable across platforms and Rust versions,
/// unlike `DefaultHasher`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Independent substream `index` of the generator seeded by `seed`.
///
/// Streams with different indices never overlap, so per-item work can be
/// parallelized without changing the produced values.
pub fn substream(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index.into());
    rng
}

/// Substream addressed by a string tag instead of an index.
pub fn tagged_stream(seed: u64, tag: &str) -> ChaCha12Rng {
    substream(seed, fnv1a64(tag.as_bytes()))
}

/// Seed for one sweep cell, derived from the base seed and the cell key.
pub fn cell_seed(base_seed: u64, key: &str) -> u64 {
    splitmix64(base_seed ^ fnv1a64(key.as_bytes()))
}
