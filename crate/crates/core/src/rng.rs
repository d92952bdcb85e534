//! Reproducible random streams.
//!
//! Every stream is a ChaCha8 generator whose 256-bit key is derived from a
//! master seed and a path of integer tags (for example `[TREE, b]`). The
//! derivation folds each tag into a 64-bit state with SplitMix64 and then
//! expands that state into four key words with further SplitMix64 steps.
//! Streams therefore depend only on `(seed, path)`, never on the order in
//! which they are requested, which keeps parallel training bit-stable.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator type used for all randomness in the crate.
pub type Stream = ChaCha8Rng;

/// Tags identifying the purpose of a derived stream.
pub mod tag {
    pub const TREE: u64 = 0x7472_6565;
    pub const DATA: u64 = 0x6461_7461;
    pub const TEST_POINTS: u64 = 0x7465_7374;
    pub const REPLICATE: u64 = 0x7265_706c;
    pub const SPLIT: u64 = 0x7370_6c74;
    pub const ORACLE: u64 = 0x6f72_636c;
    pub const NOISE: u64 = 0x6e6f_6973;
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// One SplitMix64 output for the given state.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `path` into `seed`, producing the 64-bit state of a derived stream.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |state, &t| splitmix64(state ^ splitmix64(t)))
}

/// Builds the stream addressed by `(seed, path)`.
pub fn stream(seed: u64, path: &[u64]) -> Stream {
    let mut state = derive_seed(seed, path);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
