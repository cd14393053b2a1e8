//! The interface the simulation loop drives every policy through.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::metric_space::Arm;

pub type SimRng = ChaCha8Rng;

/// Caller-owned random streams a policy may draw from.
#[derive(Debug, Clone)]
pub struct PolicyRngs {
    /// Internal decisions (layer draws, meta-level choices).
    pub decisions: SimRng,
    /// Arm placement inside a chosen region.
    pub sampling: SimRng,
}

impl PolicyRngs {
    pub fn from_seed(seed: u64) -> Self {
        let mut decisions = SimRng::seed_from_u64(seed);
        decisions.set_stream(1);
        let mut sampling = SimRng::seed_from_u64(seed);
        sampling.set_stream(2);
        Self { decisions, sampling }
    }
}

/// A bandit policy: picks one arm per round and learns from the observed,
/// possibly corrupted, reward of that arm only.
pub trait Policy {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn select(&mut self, rngs: &mut PolicyRngs) -> Result<Arm>;

    fn observe(&mut self, y: f64) -> Result<()>;
}
