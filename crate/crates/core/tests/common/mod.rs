//! Oracles and experiment drivers shared by the integration tests and the
//! acceptance runner.
#![allow(dead_code)]

pub mod experiments;
pub mod grad;
pub mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()
}

/// A probability vector with many exact ties: small integer masses, normalized.
pub fn coarse_probs(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let masses: Vec<u32> = (0..k).map(|_| rng.random_range(1..=4)).collect();
    let total: u32 = masses.iter().sum();
    masses.iter().map(|&m| m as f64 / total as f64).collect()
}
