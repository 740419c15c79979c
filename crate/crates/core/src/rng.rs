//! Reproducible random streams.
//!
//! Every stochastic component draws from a ChaCha8 stream keyed by a 64-bit
//! seed. Sub-streams are derived with the SplitMix64 finalizer, so a stream
//! identified by `(seed, tag, index)` is identical on every platform and does
//! not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX2: u64 = 0x94D0_49BB_1331_11EB;

/// SplitMix64 output function.
#[inline]
pub fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(MIX1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX2);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed, a stream tag and an index.
pub fn derive(seed: u64, tag: &str, index: u64) -> u64 {
    let mut h = splitmix(seed);
    for b in tag.bytes() {
        h = splitmix(h ^ u64::from(b));
    }
    splitmix(h ^ index.wrapping_mul(GOLDEN))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, tag: &str, index: u64) -> Rng {
    rng(derive(seed, tag, index))
}
