//! Seeded random streams.
//!
//! Every stochastic step draws from a ChaCha8 generator keyed by the user seed
//! and a path of indices (replication, cell, start), so results do not depend
//! on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives a child seed from `seed` and a path of stream indices.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &k| {
        splitmix64(acc ^ splitmix64(k.wrapping_add(1)))
    })
}

/// Generator for the stream `(seed, path...)`.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(derive_seed(seed, path));
    rng
}
