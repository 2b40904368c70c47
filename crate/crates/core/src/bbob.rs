//! BBOB-style benchmark functions, task sampling and the noise model.
//!
//! Functions follow the structure of the standard BBOB definitions with the
//! rotations dropped and the oscillation/asymmetry transforms removed, so
//! each core is an explicit function of `z = x - x_star`. Every core except
//! [`BbobFunction::LinearSlope`] has its minimum `0` at `z = 0`.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::attention::Matrix;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Default multiplicative noise strength.
pub const NOISE_BETA: f64 = 0.01;
/// Noisy evaluations clamp the clean value below at this before scaling.
pub const NOISE_FLOOR: f64 = 1e-12;
/// Summands in the Weierstrass series.
pub const WEIERSTRASS_TERMS: usize = 12;
/// Search box half-width.
pub const BOX: f64 = 5.0;

const SCHWEFEL_OPT: f64 = 420.968_746_359_982;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BbobFunction {
    Sphere,
    Ellipsoidal,
    Rastrigin,
    BuecheRastrigin,
    LinearSlope,
    AttractiveSector,
    StepEllipsoid,
    Rosenbrock,
    Discus,
    SharpRidge,
    DifferentPowers,
    Weierstrass,
    SchaffersF7,
    GriewankRosenbrock,
    Schwefel,
}

impl BbobFunction {
    pub const ALL: [BbobFunction; 15] = [
        Self::Sphere,
        Self::Ellipsoidal,
        Self::Rastrigin,
        Self::BuecheRastrigin,
        Self::LinearSlope,
        Self::AttractiveSector,
        Self::StepEllipsoid,
        Self::Rosenbrock,
        Self::Discus,
        Self::SharpRidge,
        Self::DifferentPowers,
        Self::Weierstrass,
        Self::SchaffersF7,
        Self::GriewankRosenbrock,
        Self::Schwefel,
    ];

    /// Functions used for meta-training.
    pub const META_TRAIN: [BbobFunction; 10] = [
        Self::Sphere,
        Self::Rosenbrock,
        Self::Discus,
        Self::Rastrigin,
        Self::Schwefel,
        Self::BuecheRastrigin,
        Self::AttractiveSector,
        Self::Weierstrass,
        Self::SchaffersF7,
        Self::GriewankRosenbrock,
    ];

    /// Functions held out from meta-training.
    pub const HOLD_OUT: [BbobFunction; 5] =
        [Self::Ellipsoidal, Self::LinearSlope, Self::StepEllipsoid, Self::SharpRidge, Self::DifferentPowers];

    pub fn id(self) -> &'static str {
        match self {
            Self::Sphere => "sphere",
            Self::Ellipsoidal => "ellipsoidal",
            Self::Rastrigin => "rastrigin",
            Self::BuecheRastrigin => "bueche-rastrigin",
            Self::LinearSlope => "linear-slope",
            Self::AttractiveSector => "attractive-sector",
            Self::StepEllipsoid => "step-ellipsoid",
            Self::Rosenbrock => "rosenbrock",
            Self::Discus => "discus",
            Self::SharpRidge => "sharp-ridge",
            Self::DifferentPowers => "different-powers",
            Self::Weierstrass => "weierstrass",
            Self::SchaffersF7 => "schaffers-f7",
            Self::GriewankRosenbrock => "griewank-rosenbrock",
            Self::Schwefel => "schwefel",
        }
    }

    /// Evaluates the function at `z = x - x_star`.
    pub fn core(self, z: &[f64]) -> f64 {
        match self {
            Self::Sphere => z.iter().map(|v| v * v).sum(),
            Self::Ellipsoidal => weighted(z, 1e6).map(|(w, v)| w * v * v).sum(),
            Self::Rastrigin => {
                let s: Vec<f64> = weighted(z, 10.0).map(|(w, v)| w.sqrt() * v).collect();
                rastrigin(&s)
            }
            Self::BuecheRastrigin => {
                let s: Vec<f64> = weighted(z, 10.0)
                    .enumerate()
                    .map(|(i, (w, v))| {
                        let s = w.sqrt() * v;
                        if v > 0.0 && i % 2 == 0 {
                            10.0 * s
                        } else {
                            s
                        }
                    })
                    .collect();
                rastrigin(&s)
            }
            Self::LinearSlope => {
                let d = z.len();
                (0..d)
                    .map(|i| {
                        let s = 10f64.powf(exponent(i, d));
                        let zi = z[i].min(BOX);
                        BOX * s - s * zi
                    })
                    .sum()
            }
            Self::AttractiveSector => {
                let s: f64 = weighted(z, 10.0)
                    .map(|(w, v)| {
                        let v = w.sqrt() * v;
                        let s = if v > 0.0 { 100.0 } else { 1.0 };
                        (s * v).powi(2)
                    })
                    .sum();
                s.powf(0.9)
            }
            Self::StepEllipsoid => {
                let d = z.len();
                let zh: Vec<f64> = weighted(z, 10.0).map(|(w, v)| w.sqrt() * v).collect();
                let sum: f64 = zh
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let t = if v.abs() > 0.5 { (0.5 + v).floor() } else { (0.5 + 10.0 * v).floor() / 10.0 };
                        10f64.powf(2.0 * exponent(i, d)) * t * t
                    })
                    .sum();
                0.1 * (zh.first().map_or(0.0, |v| v.abs()) / 1e4).max(sum)
            }
            Self::Rosenbrock => {
                let c = rosen_scale(z.len());
                let s: Vec<f64> = z.iter().map(|v| c * v + 1.0).collect();
                s.windows(2).map(|w| 100.0 * (w[0] * w[0] - w[1]).powi(2) + (w[0] - 1.0).powi(2)).sum()
            }
            Self::Discus => match z.split_first() {
                Some((first, rest)) => 1e6 * first * first + rest.iter().map(|v| v * v).sum::<f64>(),
                None => 0.0,
            },
            Self::SharpRidge => {
                let s: Vec<f64> = weighted(z, 10.0).map(|(w, v)| w.sqrt() * v).collect();
                match s.split_first() {
                    Some((first, rest)) => first * first + 100.0 * rest.iter().map(|v| v * v).sum::<f64>().sqrt(),
                    None => 0.0,
                }
            }
            Self::DifferentPowers => {
                let d = z.len();
                z.iter().enumerate().map(|(i, v)| v.abs().powf(2.0 + 4.0 * exponent(i, d))).sum::<f64>().sqrt()
            }
            Self::Weierstrass => {
                let d = z.len();
                if d == 0 {
                    return 0.0;
                }
                let f0: f64 =
                    (0..WEIERSTRASS_TERMS).map(|k| 0.5f64.powi(k as i32) * (PI * 3f64.powi(k as i32)).cos()).sum();
                let s: f64 = weighted(z, 0.01)
                    .map(|(w, v)| {
                        let v = w.sqrt() * v;
                        (0..WEIERSTRASS_TERMS)
                            .map(|k| 0.5f64.powi(k as i32) * (2.0 * PI * 3f64.powi(k as i32) * (v + 0.5)).cos())
                            .sum::<f64>()
                    })
                    .sum();
                10.0 * (s / d as f64 - f0).powi(3)
            }
            Self::SchaffersF7 => {
                let d = z.len();
                if d < 2 {
                    return 0.0;
                }
                let v: Vec<f64> = weighted(z, 10.0).map(|(w, v)| w.sqrt() * v).collect();
                let sum: f64 = v
                    .windows(2)
                    .map(|w| {
                        let s = (w[0] * w[0] + w[1] * w[1]).sqrt();
                        s.sqrt() + s.sqrt() * (50.0 * s.powf(0.2)).sin().powi(2)
                    })
                    .sum();
                (sum / (d - 1) as f64).powi(2)
            }
            Self::GriewankRosenbrock => {
                let d = z.len();
                if d < 2 {
                    return 0.0;
                }
                let c = rosen_scale(d);
                let s: Vec<f64> = z.iter().map(|v| c * v + 1.0).collect();
                let sum: f64 = s
                    .windows(2)
                    .map(|w| {
                        let si = 100.0 * (w[0] * w[0] - w[1]).powi(2) + (w[0] - 1.0).powi(2);
                        si / 4000.0 - si.cos()
                    })
                    .sum();
                10.0 * sum / (d - 1) as f64 + 10.0
            }
            Self::Schwefel => {
                let d = z.len();
                if d == 0 {
                    return 0.0;
                }
                let c = SCHWEFEL_OPT * SCHWEFEL_OPT.sqrt().sin();
                let mut value = 0.0;
                let mut penalty = 0.0;
                for &v in z {
                    let y = 100.0 * v + SCHWEFEL_OPT;
                    value += c - y * y.abs().sqrt().sin();
                    penalty += (y.abs() / 100.0 - BOX).max(0.0).powi(2);
                }
                value / (100.0 * d as f64) + 100.0 * penalty
            }
        }
    }
}

impl fmt::Display for BbobFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for BbobFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|f| f.id() == key)
            .or(match key.as_str() {
                "griewank-rosen" => Some(Self::GriewankRosenbrock),
                "schaffers" => Some(Self::SchaffersF7),
                _ => None,
            })
            .ok_or_else(|| Error::UnknownTask(s.to_string()))
    }
}

/// `(i-1)/(D-1)` with the one-dimensional case pinned to 0.
fn exponent(i: usize, d: usize) -> f64 {
    if d <= 1 {
        0.0
    } else {
        i as f64 / (d - 1) as f64
    }
}

/// Pairs each coordinate with its conditioning weight `alpha^((i-1)/(D-1))`.
fn weighted(z: &[f64], alpha: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
    let d = z.len();
    z.iter().enumerate().map(move |(i, &v)| (alpha.powf(exponent(i, d)), v))
}

fn rastrigin(s: &[f64]) -> f64 {
    let d = s.len() as f64;
    10.0 * (d - s.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>()) + s.iter().map(|v| v * v).sum::<f64>()
}

fn rosen_scale(d: usize) -> f64 {
    1f64.max((d as f64).sqrt() / 8.0)
}

/// One concrete optimization problem drawn from a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub function: BbobFunction,
    pub dim: usize,
    pub x_star: Vec<f64>,
    /// Initial mutation rate handed to the inner-loop GA.
    pub sigma_init: f64,
    /// Multiplicative log-normal noise strength; `None` for clean evaluations.
    pub noise: Option<f64>,
    pub seed: u64,
}

impl TaskSpec {
    /// Noise-free task with its optimum at `x_star`.
    pub fn new(function: BbobFunction, x_star: Vec<f64>) -> Result<Self> {
        if x_star.is_empty() {
            return Err(Error::InvalidArgument("task dimension must be at least 1".into()));
        }
        if x_star.iter().any(|v| !v.is_finite() || v.abs() > BOX) {
            return Err(Error::InvalidArgument(format!("optimum offset must lie in [-{BOX}, {BOX}]")));
        }
        Ok(Self { function, dim: x_star.len(), x_star, sigma_init: 0.1, noise: None, seed: 0 })
    }

    pub fn centered(function: BbobFunction, dim: usize) -> Result<Self> {
        Self::new(function, vec![0.0; dim])
    }

    pub fn with_noise(mut self, beta: f64) -> Self {
        self.noise = Some(beta);
        self
    }

    pub fn with_sigma_init(mut self, sigma: f64) -> Self {
        self.sigma_init = sigma;
        self
    }

    /// Clean objective value of a single point.
    pub fn value(&self, x: &[f64]) -> f64 {
        let z: Vec<f64> = x.iter().zip(&self.x_star).map(|(a, b)| a - b).collect();
        self.function.core(&z)
    }

    /// Evaluates every row of `x`. Noise draws come from `rng` only for noisy tasks.
    pub fn eval(&self, x: &Matrix, rng: &mut Rng) -> Result<Vec<f64>> {
        if x.cols() != self.dim {
            return Err(Error::shape(
                "TaskSpec::eval",
                format!("task has dimension {}, candidates have {}", self.dim, x.cols()),
            ));
        }
        Ok(x.row_iter()
            .map(|row| {
                let f = self.value(row);
                match self.noise {
                    Some(beta) => {
                        let n: f64 = rng.sample(StandardNormal);
                        f.max(NOISE_FLOOR) * (beta * n).exp()
                    }
                    None => f,
                }
            })
            .collect())
    }
}

/// Distribution over tasks for meta-training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFamily {
    pub functions: Vec<BbobFunction>,
    /// Inclusive dimension range.
    pub dim_range: (usize, usize),
    pub sigma_range: (f64, f64),
    /// Probability that a sampled task has evaluation noise.
    pub noise_prob: f64,
    pub noise_beta: f64,
}

impl TaskFamily {
    pub fn new(functions: Vec<BbobFunction>) -> Self {
        Self { functions, dim_range: (2, 10), sigma_range: (0.01, 0.5), noise_prob: 0.0, noise_beta: NOISE_BETA }
    }

    /// Sphere only.
    pub fn small() -> Self {
        Self::new(BbobFunction::META_TRAIN[..1].to_vec())
    }

    /// Sphere plus Rosenbrock, Discus, Rastrigin and Schwefel.
    pub fn medium() -> Self {
        Self::new(BbobFunction::META_TRAIN[..5].to_vec())
    }

    /// All ten meta-training functions.
    pub fn large() -> Self {
        Self::new(BbobFunction::META_TRAIN.to_vec())
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "small" => Ok(Self::small()),
            "medium" => Ok(Self::medium()),
            "large" => Ok(Self::large()),
            other => Err(Error::InvalidConfig(format!("unknown task family `{other}`"))),
        }
    }

    pub fn with_dims(mut self, lo: usize, hi: usize) -> Self {
        self.dim_range = (lo, hi);
        self
    }

    pub fn with_noise(mut self, prob: f64) -> Self {
        self.noise_prob = prob;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.functions.is_empty() {
            return Err(Error::InvalidConfig("task family has no functions".into()));
        }
        let (lo, hi) = self.dim_range;
        if lo < 1 || lo > hi {
            return Err(Error::InvalidConfig(format!("bad dimension range [{lo}, {hi}]")));
        }
        let (slo, shi) = self.sigma_range;
        if !(slo > 0.0 && slo <= shi) {
            return Err(Error::InvalidConfig(format!("bad sigma range [{slo}, {shi}]")));
        }
        if !(0.0..=1.0).contains(&self.noise_prob) {
            return Err(Error::InvalidConfig("noise probability must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Draws a task: uniform function, uniform integer dimension, uniform offset
/// in the box and uniform initial mutation rate.
pub fn sample_task(family: &TaskFamily, rng: &mut Rng) -> Result<TaskSpec> {
    family.validate()?;
    let function = family.functions[rng.random_range(0..family.functions.len())];
    let dim = rng.random_range(family.dim_range.0..=family.dim_range.1);
    let x_star = (0..dim).map(|_| rng.random_range(-BOX..=BOX)).collect();
    let (slo, shi) = family.sigma_range;
    let sigma_init = if slo == shi { slo } else { rng.random_range(slo..shi) };
    let noisy = rng.random::<f64>() < family.noise_prob;
    let seed = rng.random();
    Ok(TaskSpec { function, dim, x_star, sigma_init, noise: noisy.then_some(family.noise_beta), seed })
}
