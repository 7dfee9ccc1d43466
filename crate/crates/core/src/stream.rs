//! Counter-addressed random streams.
//!
//! Every block of pulses draws from its own ChaCha8 stream keyed by the
//! master seed and a stream id. Ids are derived from structured labels so a
//! block's randomness depends only on *which* block it is.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type BlockRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub const fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a sequence of labels into one stream id.
pub fn stream_id(labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(0x6a09_e667_f3bc_c909, |acc, &l| mix64(acc ^ mix64(l)))
}

/// The generator for stream `id` under `master_seed`.
pub fn block_rng(master_seed: u64, id: u64) -> BlockRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(id);
    rng
}
