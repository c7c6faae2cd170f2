//! Named, reproducible random streams.
//!
//! Every stream is a ChaCha8 generator keyed by `seed` and positioned on
//! one of its 2^64 independent streams. The stream id is derived from the
//! Monte Carlo run index and a [`Purpose`], so each run owns distinct
//! streams and the draws do not depend on which thread executes the run.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// What a stream is used for. Distinct purposes of the same run never
/// share draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    /// Initial state, process and measurement noise of a trajectory.
    Trajectory = 0,
    /// Conditional future rollouts used by calibration checks.
    Rollout = 1,
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Stream for `(run index, purpose)` under a base seed.
    pub fn for_run(seed: u64, run: u64, purpose: Purpose) -> Self {
        Self::new(seed, (run << 8) | purpose as u64)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Position in the underlying keystream, in 32-bit words.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}
