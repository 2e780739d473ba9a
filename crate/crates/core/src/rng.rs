//! Counter-keyed random streams.
//!
//! Every random draw in a run comes from a ChaCha8 stream whose seed is a
//! pure function of `(root seed, key path)`. Parallel and serial execution
//! therefore consume identical streams, whatever the scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// Stream purpose tags, mixed into the key path.
pub mod tag {
    pub const REPLICATION: u64 = 0x5245_504c;
    pub const INITIAL: u64 = 0x494e_4954;
    pub const ALLOCATION: u64 = 0x414c_4c4f;
    pub const SPLIT: u64 = 0x5350_4c54;
    pub const PILOT: u64 = 0x5049_4c54;
    pub const INDEPENDENT: u64 = 0x4953_5341;
    pub const CHAIN: u64 = 0x4348_4149;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a root seed and a key path.
pub fn derive_seed(root: u64, key: &[u64]) -> u64 {
    key.iter()
        .fold(splitmix64(root), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Opens the stream identified by `(root, key)`.
pub fn stream(root: u64, key: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(root, key))
}
