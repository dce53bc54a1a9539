//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by
//! `(seed, experiment)` and positioned by a stream id (usually a replicate
//! index). Work can therefore be split across threads in any way without
//! changing the numbers drawn.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Experiment tags used to separate independent uses of one seed.
pub mod experiment {
    pub const NOISE: u64 = 0x006e_6f69_7365;
    pub const SIGNAL: u64 = 0x7369_676e_616c;
    pub const MONTE_CARLO: u64 = 0x6d63_7269_736b;
    pub const CONCENTRATION: u64 = 0x636f_6e63;
    pub const CALIBRATION: u64 = 0x0063_616c_6962;
    pub const REGRESSION: u64 = 0x7265_6772;
}

/// A generator for stream `stream` of experiment `experiment` under `seed`.
pub fn stream_rng(seed: u64, experiment: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&experiment.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Mixes two words into a fresh seed (splitmix64 finaliser).
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
