//! Counter-style random substreams.
//!
//! Every random draw in the crate is taken from a generator keyed by a path
//! of indices below the master seed (for example `seed → trial → device`), so
//! the values drawn never depend on the order in which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Substream {
    key: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Substream {
    pub fn root(seed: u64) -> Self {
        Substream { key: splitmix64(seed) }
    }

    /// Derived stream for `index` below this one.
    pub fn child(self, index: u64) -> Self {
        Substream {
            key: splitmix64(self.key ^ splitmix64(index ^ 0xA076_1D64_78BD_642F)),
        }
    }

    /// 64-bit key, usable as the master seed of a nested computation.
    pub fn key(self) -> u64 {
        self.key
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key)
    }
}
