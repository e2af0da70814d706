//! Deterministic random streams.
//!
//! Every stochastic routine takes an explicit `&mut impl Rng`. Independent
//! workers get their own stream, derived from a master seed plus a tag so that
//! adding work items never perturbs the streams of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

/// Stream seeded directly from a 64-bit seed.
pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a purpose tag and a list of indices into a new
/// seed. The mix is stable across platforms and releases.
pub fn derive_seed(master: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for b in tag.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    // separator so ("ab", [1]) and ("a", [..]) cannot collide trivially
    h = splitmix64(h ^ 0xff);
    for &i in indices {
        h = splitmix64(h ^ i);
    }
    h
}

/// Convenience wrapper: `stream(derive_seed(..))`.
pub fn derived_stream(master: u64, tag: &str, indices: &[u64]) -> Stream {
    stream(derive_seed(master, tag, indices))
}
