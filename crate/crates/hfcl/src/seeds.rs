//! Seed derivation for independent, reproducible RNG streams.
//!
//! Every random decision in the simulator (parameter init, mini-batch
//! shuffles, channel noise, data partitioning) draws from its own stream,
//! keyed by a domain tag plus whatever identifies the call site (client id,
//! round index). Streams derived from the same master seed are stable no
//! matter which other streams are consumed, so e.g. disabling channel noise
//! cannot shift the mini-batch shuffles of an otherwise identical run.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// Domain tags for the simulator's RNG streams.
pub mod domain {
    /// Model parameter initialization.
    pub const INIT: u64 = 1;
    /// Mini-batch shuffling, keyed by (client, round).
    pub const MINIBATCH: u64 = 2;
    /// Gradient-uplink channel noise, keyed by (client, round).
    pub const CHANNEL_GRADIENT: u64 = 3;
    /// Dataset-uplink channel noise, keyed by (client, round).
    pub const CHANNEL_DATASET: u64 = 4;
    /// IID partitioning of the dataset across clients.
    pub const PARTITION: u64 = 5;
    /// Train/validation subsampling of a loaded dataset.
    pub const SUBSAMPLE: u64 = 6;
    /// Synthetic fixture generation.
    pub const FIXTURE: u64 = 7;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a sub-seed from a master seed and a path of identifying words
/// (domain tag first, then client id, round index, ...).
pub fn derive(master: u64, path: &[u64]) -> u64 {
    let mut state = splitmix(master);
    for &word in path {
        state = splitmix(state ^ word.wrapping_mul(GOLDEN));
    }
    state
}

/// A deterministic RNG for the stream identified by `(master, path)`.
pub fn stream_rng(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, path))
}
