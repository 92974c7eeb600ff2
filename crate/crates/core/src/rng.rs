//! Counter-based RNG stream derivation.
//!
//! Every random quantity in an experiment is drawn from a ChaCha8 stream
//! keyed by the master seed and a short path of tags (stream domain, drop
//! index, realization index, ...). The key is folded with SplitMix64 into
//! the 64-bit ChaCha stream id, so a stream never depends on how many
//! other streams were consumed before it or on which thread runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Kept as distinct constants so that two uses of the
/// same indices never alias.
pub mod domain {
    pub const DROP_GEOMETRY: u64 = 0x01;
    pub const CHANNEL: u64 = 0x02;
    pub const PILOT_NOISE: u64 = 0x03;
    pub const CLUSTERING: u64 = 0x04;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the stream id for a tag path.
pub fn stream_id(tags: &[u64]) -> u64 {
    tags.iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Returns an independent generator for `tags` under `master_seed`.
pub fn stream(master_seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(tags));
    rng
}
