//! Per-path random streams.
//!
//! Every stochastic component draws from a ChaCha stream keyed by
//! `(seed, role, path)`, so results do not depend on how paths are scheduled
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream families. Market and mortality randomness never share a
/// stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Market = 1,
    Mortality = 2,
    Death = 3,
    Init = 4,
    Minibatch = 5,
}

fn mix(seed: u64, role: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ role.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, role: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, role as u64));
    rng.set_stream(index);
    rng
}
