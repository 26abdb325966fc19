//! Counter-keyed random streams.
//!
//! Every random draw in the simulator comes from a stream identified by a
//! tuple of integers, so results do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains, kept distinct so that e.g. the gradient noise for
/// client 3 never shares a stream with the selection for round 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    GradientNoise = 1,
    Selection = 2,
    Mixing = 3,
    Problem = 4,
    Partition = 5,
    Init = 6,
    Minibatch = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic RNG for `(seed, domain, a, b)`.
pub fn keyed(seed: u64, domain: Domain, a: u64, b: u64) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for word in [domain as u64, a, b] {
        h = splitmix64(h ^ word);
    }
    ChaCha8Rng::seed_from_u64(h)
}
