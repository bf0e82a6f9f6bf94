//! Seed derivation for independent, reproducible random streams.
//!
//! Every random draw in a run comes from a ChaCha stream keyed by the run seed
//! plus a purpose tag (and usually a tile id), so two methods simulated on the
//! same seed see the same onboard detection for the same tile.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tags for derived streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Onboard = 0x6f6e_626f,
    Ground = 0x6772_6e64,
    Calibration = 0x6361_6c69,
    Dedup = 0x6465_6475,
    Scene = 0x7363_656e,
    Revisit = 0x7265_7669,
    TileFeature = 0x7466_6561,
    Boxes = 0x626f_7865,
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive combination of 64-bit words into one seed.
pub fn mix(words: &[u64]) -> u64 {
    words.iter().fold(0x243f_6a88_85a3_08d3, |acc, &w| {
        splitmix64(acc ^ splitmix64(w))
    })
}

pub fn stream(seed: u64, purpose: Stream, key: u64) -> SimRng {
    SimRng::seed_from_u64(mix(&[seed, purpose as u64, key]))
}
