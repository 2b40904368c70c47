//! Genetic operators: attention-parametrized (learned) and classic white-box ones.

mod classic;
mod learned;
mod params;

pub use classic::{
    gaussian_mutate, gaussian_mutate_with_noise, gesmr_adapt, gesmr_group_improvements, mr_one_fifth, sample_indices,
    samr_adapt, truncation_selection, uniform_sample_parents, ONE_FIFTH_MAX, ONE_FIFTH_MIN,
};
pub use learned::{
    apply_selection, learned_crossover, learned_mra, learned_sampling_probs, learned_selection_logits,
    learned_selection_probs, sample_selection, MraOutput, SelectionSample, AGE_SCALE, DELTA_SIGMA_LOG_CLAMP,
};
pub use params::{
    CrossoverWeights, HeadWeights, LgaConfig, LgaParams, MraWeights, SamplingWeights, SelectionWeights,
    CHECKPOINT_FORMAT, CHECKPOINT_VERSION, CROSSOVER_FEATURE_DIM,
};

use crate::attention::Matrix;
use crate::error::{Error, Result};

/// A batch of evaluated candidates with their mutation rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub x: Matrix,
    pub f: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl Population {
    pub fn new(x: Matrix, f: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if f.len() != x.rows() || sigma.len() != x.rows() {
            return Err(Error::shape(
                "Population",
                format!("{} rows, {} fitnesses, {} sigmas", x.rows(), f.len(), sigma.len()),
            ));
        }
        Ok(Self { x, f, sigma })
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }
}

/// The `E` elite solutions kept between generations.
#[derive(Debug, Clone, PartialEq)]
pub struct ParentArchive {
    pub x: Matrix,
    pub f: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Generations each slot has survived without being replaced.
    pub age: Vec<u32>,
}

impl ParentArchive {
    pub fn new(x: Matrix, f: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let e = x.rows();
        if f.len() != e || sigma.len() != e {
            return Err(Error::shape(
                "ParentArchive",
                format!("{e} rows, {} fitnesses, {} sigmas", f.len(), sigma.len()),
            ));
        }
        if e == 0 {
            return Err(Error::InvalidArgument("parent archive must hold at least one member".into()));
        }
        if sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument("archive mutation rates must be finite and non-negative".into()));
        }
        Ok(Self { x, f, sigma, age: vec![0; e] })
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }
}
