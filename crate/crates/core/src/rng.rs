//! Counter-based random streams.
//!
//! Every random draw in a run comes from a stream addressed by
//! `(seed, lane, step, index)`, so the result of a run does not depend on how
//! particles are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed, e.g. the seed of replicate `index` under a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Purpose tag separating streams that share a step and index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Lane {
    Propagate = 1,
    Resample = 2,
    Ancestor = 3,
    Select = 4,
    Gibbs = 5,
    Anneal = 6,
    Misc = 7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    seed: u64,
    key: [u8; 32],
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        let mut s = seed;
        for chunk in key.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        Self { seed, key }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream for `(lane, step, index)`.
    pub fn stream(&self, lane: Lane, step: u64, index: u64) -> StreamRng {
        let id = splitmix64(splitmix64(splitmix64(lane as u64) ^ step) ^ index);
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(id);
        rng
    }

    /// A child family of streams, used to give each sweep of an outer chain
    /// its own independent set of particle streams.
    pub fn child(&self, index: u64) -> RngStreams {
        RngStreams::new(derive_seed(self.seed, index))
    }
}
