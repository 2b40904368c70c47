//! Objective abstraction and the string-addressable task registry.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::attention::Matrix;
use crate::bbob::{BbobFunction, TaskSpec, BOX};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::synthetic::MlpTask;

/// A minimization problem evaluated a population at a time.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    /// Fitness of every row. Stochastic objectives draw only from `rng`.
    fn evaluate(&self, x: &Matrix, rng: &mut Rng) -> Result<Vec<f64>>;
}

impl Objective for TaskSpec {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &Matrix, rng: &mut Rng) -> Result<Vec<f64>> {
        self.eval(x, rng)
    }
}

impl Objective for MlpTask {
    fn dim(&self) -> usize {
        MlpTask::dim(self)
    }

    fn evaluate(&self, x: &Matrix, _rng: &mut Rng) -> Result<Vec<f64>> {
        self.eval(x)
    }
}

/// Wraps a row-wise closure as a noiseless objective.
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &Matrix, _rng: &mut Rng) -> Result<Vec<f64>> {
        if x.cols() != self.dim {
            return Err(Error::shape("FnObjective::evaluate", "dimension mismatch"));
        }
        Ok(x.row_iter().map(|r| (self.f)(r)).collect())
    }
}

/// Id of the registered network-fitting task.
pub const MLP_SINE: &str = "mlp-sine";

/// Any registered task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Problem {
    Bbob(TaskSpec),
    Mlp(MlpTask),
}

impl Problem {
    /// Resolves a registry id. BBOB ids use `dim` and an optimum offset drawn
    /// from `seed` (or the origin when `offset` is false); `mlp-sine` ignores
    /// `dim` and builds its dataset from `seed`.
    pub fn from_id(id: &str, dim: usize, seed: u64, offset: bool) -> Result<Self> {
        if id == MLP_SINE {
            return Ok(Self::Mlp(MlpTask::new(seed)));
        }
        let function: BbobFunction = id.parse()?;
        if dim == 0 {
            return Err(Error::InvalidArgument(format!("task `{id}` needs a dimension of at least 1")));
        }
        let x_star = if offset {
            let mut r = rng::derive(seed, &[rng::stream::OFFSET]);
            (0..dim).map(|_| r.random_range(-BOX..=BOX)).collect()
        } else {
            vec![0.0; dim]
        };
        Ok(Self::Bbob(TaskSpec { seed, ..TaskSpec::new(function, x_star)? }))
    }

    pub fn id(&self) -> &str {
        match self {
            Self::Bbob(t) => t.function.id(),
            Self::Mlp(_) => MLP_SINE,
        }
    }

    /// All ids the registry accepts.
    pub fn known_ids() -> Vec<&'static str> {
        BbobFunction::ALL.iter().map(|f| f.id()).chain([MLP_SINE]).collect()
    }
}

impl Objective for Problem {
    fn dim(&self) -> usize {
        match self {
            Self::Bbob(t) => t.dim,
            Self::Mlp(t) => t.dim(),
        }
    }

    fn evaluate(&self, x: &Matrix, rng: &mut Rng) -> Result<Vec<f64>> {
        match self {
            Self::Bbob(t) => t.eval(x, rng),
            Self::Mlp(t) => t.eval(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_resolves_ids() {
        for id in Problem::known_ids() {
            let p = Problem::from_id(id, 4, 1, true).unwrap();
            assert_eq!(p.id(), id);
        }
        assert_eq!(Problem::from_id(MLP_SINE, 4, 1, true).unwrap().dim(), 33);
        assert!(matches!(Problem::from_id("bogus", 2, 0, true), Err(Error::UnknownTask(_))));
        assert!(Problem::from_id("sphere", 0, 0, true).is_err());
    }

    #[test]
    fn offsets_follow_the_seed() {
        let a = Problem::from_id("sphere", 5, 3, true).unwrap();
        let b = Problem::from_id("sphere", 5, 3, true).unwrap();
        let c = Problem::from_id("sphere", 5, 4, true).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let Problem::Bbob(t) = Problem::from_id("sphere", 5, 3, false).unwrap() else { panic!() };
        assert_eq!(t.x_star, vec![0.0; 5]);
    }
}
