//! Seeded random streams.
//!
//! Every random draw in the crate goes through a ChaCha8 generator keyed by a
//! 64-bit seed and a stream number, so results are reproducible across
//! platforms and independent of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream numbers separating the purposes a single seed is used for.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const SUBSAMPLE: u64 = 4;
    pub const DATA: u64 = 5;
    pub const MEMBER_RATIO: u64 = 6;
    /// Per-sample noise streams start here; sample `i` uses `NOISE_BASE + i`.
    pub const NOISE_BASE: u64 = 1 << 32;
}

pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
