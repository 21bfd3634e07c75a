//! Counter-based random streams.
//!
//! Every random quantity in the crate is drawn from a [`NoiseStream`]: a
//! `(seed, stream_id)` pair mapped onto a ChaCha8 keystream. The seed selects
//! the key, the stream id selects the ChaCha stream (nonce), so replicate `r`
//! always sees the same bits no matter which thread produces it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Identifies one reproducible pseudo-random sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseStream {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl NoiseStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// A statistically unrelated stream for a named sub-task of the same
    /// replicate (e.g. the mark field versus the Lévy path).
    pub fn fork(&self, tag: u64) -> Self {
        let key = splitmix64(self.seed ^ splitmix64(tag.wrapping_add(0xA076_1D64_78BD_642F)));
        Self {
            seed: key,
            stream_id: self.stream_id,
        }
    }
}

/// Fork tags used across the crate. Keeping them in one place avoids two
/// sub-tasks accidentally sharing a keystream.
pub(crate) mod tags {
    pub const STABLE_PATH: u64 = 1;
    pub const FBM: u64 = 2;
    pub const FIELD: u64 = 3;
    pub const PRELIMIT: u64 = 4;
    pub const RETRY: u64 = 5;
    pub const KESTEN: u64 = 6;
    pub const GARCH_LOG_MOMENT: u64 = 7;
    pub const REF_TABLE: u64 = 8;
    pub const LONG_RUN: u64 = 9;
}
