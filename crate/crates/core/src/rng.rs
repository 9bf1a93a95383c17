//! Reproducible random streams.
//!
//! Every random draw in the crate goes through a ChaCha8 generator keyed by a
//! 64-bit seed and a stream id. Monte Carlo replications derive their seeds with
//! [`replication_seed`], which is injective in the replication index, so streams
//! never collide and results do not depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream ids used inside a single replication.
pub mod streams {
    pub const CURVES: u64 = 1;
    pub const SCALING: u64 = 2;
    pub const RESPONSES: u64 = 3;
}

/// SplitMix64 finalizer. A bijection on `u64`.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replication `rep` of an experiment keyed by `master`.
///
/// `master + rep * GOLDEN_GAMMA` is injective in `rep` (the multiplier is odd)
/// and `mix64` is a bijection, so distinct replications never share a seed.
pub fn replication_seed(master: u64, rep: u64) -> u64 {
    mix64(master.wrapping_add(rep.wrapping_mul(GOLDEN_GAMMA)))
}

pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}
