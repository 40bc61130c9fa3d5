//! Seeded random streams.
//!
//! A run owns one seed. Each stochastic concern draws from its own ChaCha
//! stream derived from that seed, so consuming more of one stream (say,
//! longer rollouts) never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SearchRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Selection,
    Opponent,
    Judge,
    FinalPick,
    Tournament,
    Jump,
    /// Action proposals for the `n`-th independent rollout family.
    Rollout(u32),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Selection => 1,
            Stream::Opponent => 2,
            Stream::Judge => 3,
            Stream::FinalPick => 4,
            Stream::Tournament => 5,
            Stream::Jump => 6,
            Stream::Rollout(n) => 1_000 + u64::from(n),
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> SearchRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}

/// SplitMix64 finalizer; used to derive child seeds and hash-based coin flips.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps a 64-bit hash to a uniform value in `[0, 1)`.
pub fn unit_from_hash(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// FNV-1a over bytes, folded with a seed. Stable across platforms and runs.
pub fn hash_bytes(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ mix64(seed);
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    mix64(h)
}


/// Every stream a single search run draws from.
#[derive(Debug, Clone)]
pub struct RunStreams {
    pub selection: SearchRng,
    pub rollout: SearchRng,
    pub opponent: SearchRng,
    pub judge: SearchRng,
    pub final_pick: SearchRng,
    pub jump: SearchRng,
}

impl RunStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            selection: stream(seed, Stream::Selection),
            rollout: stream(seed, Stream::Rollout(0)),
            opponent: stream(seed, Stream::Opponent),
            judge: stream(seed, Stream::Judge),
            final_pick: stream(seed, Stream::FinalPick),
            jump: stream(seed, Stream::Jump),
        }
    }
}
