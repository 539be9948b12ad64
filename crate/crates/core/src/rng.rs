//! Counter-based random substreams.
//!
//! Every random draw in a run is keyed by a tuple such as
//! `(seed, iteration, start, walker)`, so results do not depend on how work
//! is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep unrelated consumers of the same seed apart.
pub mod tag {
    pub const COLLOCATION: u64 = 0x636f_6c6c;
    pub const WALKERS: u64 = 0x7761_6c6b;
    pub const ORACLE: u64 = 0x6f72_636c;
    pub const PROBES: u64 = 0x7072_6f62;
    pub const INIT: u64 = 0x696e_6974;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a key tuple into a 64-bit seed.
pub fn mix(seed: u64, key: &[u64]) -> u64 {
    key.iter()
        .fold(splitmix64(seed), |h, &k| splitmix64(h ^ splitmix64(k)))
}

/// Independent generator for the given key.
pub fn substream(seed: u64, key: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, key))
}
