//! Benchmark fixtures.

use rand::Rng as _;

use lga::features::{build_joint_fitness_features, build_sampled_parent_features, JointFeatures, MraFeatures};
use lga::{rng, LgaConfig, LgaParams, Matrix};

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng::from_seed(seed);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_params(seed: u64) -> LgaParams {
    let config = LgaConfig::default();
    let mut r = rng::from_seed(seed);
    let flat: Vec<f64> = (0..config.num_params()).map(|_| r.random_range(-0.5..0.5)).collect();
    LgaParams::from_flat(config, &flat).unwrap()
}

pub fn random_fitness(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::from_seed(seed);
    (0..n).map(|_| r.random_range(0.0..10.0)).collect()
}

/// Joint features for `n` children against `e` parents.
pub fn joint_features(n: usize, e: usize, seed: u64) -> JointFeatures {
    build_joint_fitness_features(&random_fitness(n, seed), &random_fitness(e, seed + 1), 1.0).unwrap()
}

/// Mutation-rate features and rates for `n` sampled parents.
pub fn mra_inputs(n: usize, seed: u64) -> (MraFeatures, Vec<f64>) {
    let sigma: Vec<f64> = random_fitness(n, seed + 2).iter().map(|v| 0.01 + v / 10.0).collect();
    (build_sampled_parent_features(&random_fitness(n, seed), &sigma, 1.0).unwrap(), sigma)
}
