//! Deterministic seed derivation.
//!
//! Every random draw in the crate comes from a ChaCha stream whose seed is
//! derived from a master seed and a path of integer tags (day ordinal, trial,
//! node index, ...). Results therefore do not depend on evaluation order or
//! thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `tags` into `seed`, producing an independent child seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix(seed), |acc, &t| splitmix(acc ^ splitmix(t.wrapping_add(GOLDEN))))
}

pub fn rng_for(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}
