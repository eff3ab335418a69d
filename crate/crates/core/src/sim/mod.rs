//! Ground-truth simulation: nonlinear power flow, synthetic loads,
//! measurement noise and closed-loop scenarios.

pub mod closed_loop;
pub mod loads;
pub mod noise;
pub mod power_flow;
pub mod scenario;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Loads = 1,
    Noise = 2,
    Scenario = 3,
    MonteCarlo = 4,
}

/// A generator for `(seed, stream, counter)`; distinct triples never share
/// output.
pub fn rng_for(seed: u64, stream: Stream, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 56) ^ counter);
    rng
}
