//! Named, independently seeded random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed for the sub-stream `name` of a run seeded with `seed`.
pub fn stream_seed(seed: u64, name: &str) -> u64 {
    let mut z = seed ^ fnv1a(name.as_bytes());
    // splitmix64 finaliser
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, name: &str) -> Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, name))
}

/// Sub-stream indexed by an integer, e.g. one per scene.
pub fn indexed_stream(seed: u64, name: &str, index: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(stream_seed(seed, name), &index.to_string()))
}
