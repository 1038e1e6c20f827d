//! Shared generators for the benchmark targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Unit-noise series with a mean shift at the midpoint.
pub fn stepped_series(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let base = if i < n / 2 { 55.0 } else { 50.0 };
            base + rng.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

/// i.i.d. noise around a constant level.
pub fn flat_series(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| 55.0 + rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Unit-noise series with a 4 dB level shift every 250 points, the regime
/// where candidate pruning keeps the multiple-change search linear.
pub fn multi_step_series(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let base = if (i / 250) % 2 == 0 { 55.0 } else { 51.0 };
            base + rng.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

/// Random dB levels in a plausible range.
pub fn random_levels(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(35.0..85.0)).collect()
}
