//! Splittable, reproducible random-number streams.
//!
//! Every stochastic component draws from a ChaCha8 stream keyed by
//! `(seed, stream_index, purpose)` through a SplitMix64 chain, so ensemble
//! members and distinct purposes (static field synthesis, white-in-time
//! increments, Monte Carlo paths) are independent reproducible streams with
//! no global state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tag separating independent stream families under one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Frozen-in-time field synthesis.
    StaticField,
    /// White-in-time increment synthesis (stream index = time index).
    WhiteIncrement,
    /// Monte Carlo path noise.
    McPaths,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::StaticField => 0x5346_4c44,      // "SFLD"
            Purpose::WhiteIncrement => 0x5748_4954,   // "WHIT"
            Purpose::McPaths => 0x4d43_5054,          // "MCPT"
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic ChaCha8 generator for `(seed, stream, purpose)`.
pub fn stream(seed: u64, stream: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    // Chain the three coordinates through SplitMix64 and fill the key.
    let _ = splitmix64(&mut state);
    state ^= stream.wrapping_mul(0xd6e8_feb8_6659_fd93);
    let _ = splitmix64(&mut state);
    state ^= purpose.tag().wrapping_mul(0xca5a_8269_91c2_3f45);
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
