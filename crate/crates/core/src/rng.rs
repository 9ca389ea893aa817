//! Seeded, splittable random streams.
//!
//! Every randomized operation takes a [`SeedStream`]. Replicate `k` of a
//! Monte Carlo loop draws from `stream.substream(k)`, so results do not
//! depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedStream {
    seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream `k`.
    pub fn substream(&self, k: u64) -> SeedStream {
        SeedStream {
            seed: splitmix64(splitmix64(self.seed) ^ splitmix64(k.wrapping_add(0x5851_F42D_4C95_7F2D))),
        }
    }

    /// Child stream identified by a label, for distinct roles inside one operation.
    pub fn named(&self, label: &str) -> SeedStream {
        let h = label
            .bytes()
            .fold(0xCBF2_9CE4_8422_2325_u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01B3));
        SeedStream {
            seed: splitmix64(self.seed ^ h),
        }
    }

    pub fn rng(&self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}
