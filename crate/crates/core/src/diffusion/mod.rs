//! Monte-Carlo side: radial SDE with its Bessel comparison, empirical tails,
//! pinned bridges in ℝ³ and H³, trial Rayleigh quotients, and the explicit
//! spectral-gap lower bound.

pub mod bounds;
pub mod bridge;
pub mod sde;
pub mod tail;
pub mod trial;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream `index` of the master seed.
pub(crate) fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
