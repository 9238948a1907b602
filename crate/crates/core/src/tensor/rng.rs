use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type RngStream = ChaCha8Rng;

pub const RNG_ALGORITHM: &str = "chacha8";

/// Counter-based random source: every draw is addressed by `(seed, step,
/// purpose)`, so a run resumed at step `s` sees exactly the numbers the
/// uninterrupted run saw.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub algorithm: String,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            algorithm: RNG_ALGORITHM.to_string(),
        }
    }

    /// Independent stream for one purpose at one step. `purpose` must be below 256.
    pub fn stream(&self, step: u64, purpose: u8) -> RngStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((step << 8) | u64::from(purpose));
        rng
    }
}
