//! Small regression networks whose flattened weights form a search space.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::attention::Matrix;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_LAYERS: [usize; 3] = [2, 8, 1];
pub const DEFAULT_POINTS: usize = 64;

/// Target surface sampled for the dataset.
pub fn target(x: &[f64; 2]) -> f64 {
    (PI * x[0]).sin() + x[1] * x[1]
}

/// Fully connected tanh network fitted to a fixed seeded dataset.
///
/// Weights are flattened layer by layer as the `in x out` matrix in
/// row-major order followed by the `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpTask {
    layers: Vec<usize>,
    inputs: Vec<[f64; 2]>,
    targets: Vec<f64>,
    seed: u64,
}

impl MlpTask {
    pub fn new(seed: u64) -> Self {
        Self::with_layers(&DEFAULT_LAYERS, DEFAULT_POINTS, seed).expect("default layout is valid")
    }

    /// Hidden layers are free; the input must be 2 wide and the output 1 wide.
    pub fn with_layers(layers: &[usize], points: usize, seed: u64) -> Result<Self> {
        if layers.len() < 2 || layers[0] != 2 || layers[layers.len() - 1] != 1 {
            return Err(Error::InvalidArgument(format!(
                "layer sizes must run from 2 inputs to 1 output, got {layers:?}"
            )));
        }
        if layers.contains(&0) || points == 0 {
            return Err(Error::InvalidArgument("layers and dataset must be non-empty".into()));
        }
        let mut r = rng::derive(seed, &[rng::stream::TASKS]);
        let inputs: Vec<[f64; 2]> =
            (0..points).map(|_| [r.random_range(-1.0..=1.0), r.random_range(-1.0..=1.0)]).collect();
        let targets = inputs.iter().map(target).collect();
        Ok(Self { layers: layers.to_vec(), inputs, targets, seed })
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn inputs(&self) -> &[[f64; 2]] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of flattened weights.
    pub fn dim(&self) -> usize {
        self.layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Network output for one input given flattened weights.
    pub fn forward(&self, weights: &[f64], input: &[f64; 2]) -> f64 {
        let mut act = input.to_vec();
        let mut offset = 0;
        let last = self.layers.len() - 2;
        for (l, w) in self.layers.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let mat = &weights[offset..offset + n_in * n_out];
            let bias = &weights[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            act = (0..n_out)
                .map(|o| {
                    let s = bias[o] + (0..n_in).map(|i| act[i] * mat[i * n_out + o]).sum::<f64>();
                    if l == last {
                        s
                    } else {
                        s.tanh()
                    }
                })
                .collect();
        }
        act[0]
    }

    /// Mean squared error of one weight vector over the dataset.
    pub fn loss(&self, weights: &[f64]) -> f64 {
        let sum: f64 = self.inputs.iter().zip(&self.targets).map(|(x, y)| (self.forward(weights, x) - y).powi(2)).sum();
        sum / self.inputs.len() as f64
    }

    /// Evaluates every row of `x` as a weight vector.
    pub fn eval(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.dim() {
            return Err(Error::shape(
                "MlpTask::eval",
                format!("network has {} weights, candidates have {}", self.dim(), x.cols()),
            ));
        }
        Ok(x.row_iter().map(|row| self.loss(row)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_dimension() {
        assert_eq!(MlpTask::new(0).dim(), 33);
        assert_eq!(MlpTask::with_layers(&[2, 4, 3, 1], 8, 0).unwrap().dim(), 12 + 15 + 4);
    }

    #[test]
    fn bad_layouts_are_rejected() {
        assert!(MlpTask::with_layers(&[3, 8, 1], 64, 0).is_err());
        assert!(MlpTask::with_layers(&[2, 8, 2], 64, 0).is_err());
        assert!(MlpTask::with_layers(&[2, 0, 1], 64, 0).is_err());
        assert!(MlpTask::with_layers(&[2, 8, 1], 0, 0).is_err());
        assert!(MlpTask::new(0).eval(&Matrix::zeros(1, 32)).is_err());
    }

    #[test]
    fn dataset_is_seeded() {
        assert_eq!(MlpTask::new(7), MlpTask::new(7));
        assert_ne!(MlpTask::new(7).inputs(), MlpTask::new(8).inputs());
        let t = MlpTask::new(7);
        assert_eq!(t.inputs().len(), 64);
        assert!(t.inputs().iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn zero_weights_give_mean_square_target() {
        let t = MlpTask::new(3);
        let expected = t.targets().iter().map(|y| y * y).sum::<f64>() / 64.0;
        let f = t.eval(&Matrix::zeros(1, 33)).unwrap();
        assert!((f[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn forward_matches_hand_expansion() {
        let t = MlpTask::new(1);
        let w: Vec<f64> = (0..33).map(|i| ((i * 7 % 11) as f64 - 5.0) / 10.0).collect();
        let x = [0.3, -0.6];
        let mut out = w[32];
        for h in 0..8 {
            let pre = x[0] * w[h] + x[1] * w[8 + h] + w[16 + h];
            out += pre.tanh() * w[24 + h];
        }
        assert!((t.forward(&w, &x) - out).abs() < 1e-12);
    }

    #[test]
    fn duplicate_rows_share_fitness_and_loss_is_nonnegative() {
        let t = MlpTask::new(2);
        let mut r = rng::from_seed(9);
        let row: Vec<f64> = (0..33).map(|_| r.random_range(-2.0..2.0)).collect();
        let x = Matrix::from_rows(&[row.clone(), row]).unwrap();
        let f = t.eval(&x).unwrap();
        assert_eq!(f[0], f[1]);
        assert!(f[0] >= 0.0);
    }
}
