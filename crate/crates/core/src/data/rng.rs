//! Counter-style random streams keyed by `(seed, epoch, sample, view)`.
//!
//! Each key maps to its own ChaCha stream, so any sample's draws can be
//! reproduced without replaying the draws of other samples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Views within one sample's key space.
pub mod view {
    pub const QUERY_AUG: u64 = 0;
    pub const KEY_AUG: u64 = 1;
    pub const QUERY_NOISE: u64 = 2;
    pub const KEY_NOISE: u64 = 3;
}

/// Reserved sample slots for run-level streams.
pub mod slot {
    pub const SHUFFLE: u64 = u64::MAX;
    pub const INIT: u64 = u64::MAX - 1;
    pub const QUEUE_INIT: u64 = u64::MAX - 2;
    pub const SUBSET: u64 = u64::MAX - 3;
    pub const TEMPLATE: u64 = u64::MAX - 4;
    pub const CLASSIFIER_INIT: u64 = u64::MAX - 5;
}

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, epoch: u64, index: u64, view: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&epoch.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..].copy_from_slice(&view.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
