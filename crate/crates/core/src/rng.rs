//! Deterministic random streams.
//!
//! Every independent work item (a chain, a replicate, a sampled pair) owns a
//! ChaCha8 stream derived from a `(seed, index)` pair, so results do not depend
//! on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream for work item `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Stream for item `index` of a named stage, so stages sharing a seed do not
/// reuse each other's randomness.
pub fn stage_stream(seed: u64, stage: u64, index: u64) -> StreamRng {
    stream(mix(seed, stage), index)
}

/// SplitMix64 finalizer over the pair; used to derive child seeds.
pub fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
