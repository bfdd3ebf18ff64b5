//! Deterministic random streams.
//!
//! Parallel work never shares a generator: each worker gets a ChaCha stream
//! whose seed is mixed from the run seed and the work item's indices, so
//! results do not depend on thread count or scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type ModelRng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a sequence of stream indices into a new seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn rng_from_seed(seed: u64) -> ModelRng {
    ModelRng::seed_from_u64(seed)
}

pub fn derive_rng(seed: u64, path: &[u64]) -> ModelRng {
    rng_from_seed(derive_seed(seed, path))
}

/// The pair of streams driving one Gibbs chain.
///
/// Parameter draws and unit draws come from separate streams, so a chain over
/// a degenerate ensemble consumes `units` exactly like a plain RBM chain
/// seeded with the same stream.
#[derive(Clone, Debug)]
pub struct ChainRng {
    pub theta: ModelRng,
    pub units: ModelRng,
}

impl ChainRng {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            theta: derive_rng(seed, &[0x0074_6865_7461]),
            units: derive_rng(seed, &[0x0075_6e69_7473]),
        }
    }

    pub fn from_rng<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::from_seed(rng.next_u64())
    }
}
