//! Deterministic seed derivation.
//!
//! A root seed fans out into child seeds (per tree, per repeat, per subject)
//! with a splitmix64 mix, so a unit of work gets the same generator whether it
//! runs serially or on a worker thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One splitmix64 output step for `state`.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `stream` under `root`.
pub fn derive(root: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(root) ^ stream.wrapping_mul(GOLDEN_GAMMA))
}

/// Child seed for a path of streams, e.g. `[fold, tree]`.
pub fn derive_path(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(root, |acc, &s| derive(acc, s))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
