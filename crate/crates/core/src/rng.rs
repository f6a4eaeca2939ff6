//! Reproducible random streams.
//!
//! A [`StreamKey`] names one ChaCha8 stream: the 64-bit seed fixes the key
//! material and the 64-bit id selects one of the 2^64 independent streams the
//! cipher provides. Child keys are derived by hashing, so a tree of streams
//! (per batch, per role) never depends on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Generator used for every simulation in the crate.
pub type SimRng = ChaCha8Rng;

/// Child index of the coefficient sub-stream of a simulation key.
pub const COEFFICIENT_STREAM: u64 = 0;
/// Child index of the noise sub-stream of a simulation key.
pub const NOISE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub id: u64,
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        Self { seed, id: 0 }
    }

    pub fn with_id(seed: u64, id: u64) -> Self {
        Self { seed, id }
    }

    /// Deterministic child key; distinct indices give distinct streams.
    pub fn child(&self, index: u64) -> Self {
        let id = splitmix64(splitmix64(self.id) ^ index.wrapping_add(0x9e37_79b9_7f4a_7c15));
        Self {
            seed: self.seed,
            id,
        }
    }

    pub fn rng(&self) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.id);
        rng
    }

    /// The (coefficient, noise) generator pair for one simulation unit.
    /// The two streams never share material, which realizes the
    /// predictability wiring between coefficients and noise.
    pub fn split_roles(&self) -> (SimRng, SimRng) {
        (
            self.child(COEFFICIENT_STREAM).rng(),
            self.child(NOISE_STREAM).rng(),
        )
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw on the half-open interval (0, 1].
pub(crate) fn open_unit<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}
