//! Seeded randomness.
//!
//! Every random stream is a `ChaCha8Rng` seeded through
//! `SeedableRng::seed_from_u64`. Streams for nested experiment coordinates
//! (pattern set, trial, pattern index, ...) get their seed from
//! [`derive_seed`], a SplitMix64 fold of the base seed and the coordinates,
//! so results do not depend on evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type HamRng = ChaCha8Rng;

pub fn rng(seed: u64) -> HamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the stream at coordinates `parts` under `base`.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Uniform ±1 entries, one `random::<bool>()` draw per entry (`true` → +1).
pub fn random_pm1<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

/// Independent standard normal draws scaled by `sigma`.
pub fn gaussian<R: Rng>(rng: &mut R, n: usize, sigma: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect()
}
