#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

/// `(i, z)` moves with targets uniform in `[0,1]^d`.
pub fn random_moves(n: usize, d: usize, count: usize, seed: u64) -> Vec<(usize, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (rng.random_range(0..n), (0..d).map(|_| rng.random::<f64>()).collect())).collect()
}

/// Upper tail probability of a chi-square statistic.
pub fn chi_square_p(stat: f64, dof: usize) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat)
}

/// Pearson statistic of `counts` against equal expected cell counts.
pub fn uniform_chi_square(counts: &[u64]) -> (f64, usize) {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    (stat, counts.len() - 1)
}

/// Total variation between two count vectors normalized to distributions.
pub fn total_variation(a: &[u64], b: &[u64]) -> f64 {
    let sa: u64 = a.iter().sum();
    let sb: u64 = b.iter().sum();
    0.5 * a.iter().zip(b).map(|(&x, &y)| (x as f64 / sa as f64 - y as f64 / sb as f64).abs()).sum::<f64>()
}
