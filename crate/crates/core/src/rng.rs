//! Deterministic random streams derived from one master seed.
//!
//! Every consumer of randomness gets its own ChaCha stream keyed by the master
//! seed, so changing how many draws one component makes never shifts the draws
//! seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent purposes a run draws random numbers for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Truth,
    Prior,
    ObservationNoise,
    LinearOperator,
    /// Observation perturbations at assimilation step `k` (1-based).
    Perturbation(usize),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Truth => 1,
            Stream::Prior => 2,
            Stream::ObservationNoise => 3,
            Stream::LinearOperator => 4,
            Stream::Perturbation(k) => 1000 + k as u64,
        }
    }
}

pub fn stream(master_seed: u64, purpose: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(purpose.id());
    rng
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
