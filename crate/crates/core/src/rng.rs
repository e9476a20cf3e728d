//! Seed derivation: one root seed, fixed sub-streams per consumer.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Well-known stream offsets so that adding a consumer never shifts the
/// randomness seen by the others.
pub mod stream {
    pub const DATA_TRAIN: u64 = 1;
    pub const DATA_TEST: u64 = 2;
    pub const DATA_HELDOUT: u64 = 3;
    pub const INIT_A: u64 = 10;
    pub const INIT_B: u64 = 11;
    pub const INIT_C: u64 = 12;
    pub const TRAIN_A: u64 = 20;
    pub const TRAIN_B: u64 = 21;
    pub const TRAIN_C: u64 = 22;
    pub const CURVE: u64 = 30;
    pub const CURVE_JITTER: u64 = 31;
    pub const FGE: u64 = 40;
    pub const SWEEP: u64 = 50;
}

/// Seed for sub-stream `stream` of `root`.
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream);
    rng.next_u64()
}

pub fn stream_rng(root: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, stream))
}
