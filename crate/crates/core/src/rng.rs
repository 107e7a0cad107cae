//! Counter-based random streams.
//!
//! Every run owns an [`RngStreams`] key. Independent streams are addressed by
//! a 64-bit id (time step, purpose, ...), and child keys are derived by tag, so
//! the draws used at a given (iteration, time, purpose) never depend on the
//! order in which a scheme visits them.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const DERIVE_BIT: u64 = 1 << 63;

/// Stream id purposes. The low 40 bits carry the time index.
pub mod purpose {
    pub const STEP: u64 = 0;
    pub const TRAIN: u64 = 1 << 40;
    pub const EXTRA: u64 = 2 << 40;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStreams {
    key: [u8; 32],
}

impl RngStreams {
    pub fn from_seed(seed: u64) -> Self {
        // splitmix64 expansion of the user seed into a 256-bit key
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        RngStreams { key }
    }

    /// Independent generator for stream `id`.
    pub fn stream(&self, id: u64) -> StreamRng {
        assert!(id & DERIVE_BIT == 0, "stream id collides with derivation space");
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(id);
        rng
    }

    /// Child key for a sub-computation (replicate, iteration, chain step, ...).
    pub fn derive(&self, tag: u64) -> RngStreams {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(DERIVE_BIT | (tag & !DERIVE_BIT));
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        RngStreams { key }
    }

    /// Nested derivation, shorthand for `derive(a).derive(b)`.
    pub fn derive2(&self, a: u64, b: u64) -> RngStreams {
        self.derive(a).derive(b)
    }

    pub fn key_hex(&self) -> String {
        hex::encode(self.key)
    }
}
