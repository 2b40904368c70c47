//! Attention-parametrized selection, mutation-rate adaptation, parent
//! sampling and cross-over.

use rand::Rng as _;

use super::params::{HeadWeights, LgaParams};
use super::{ParentArchive, Population};
use crate::attention::{self, multi_head_sdpa, row_softmax, sdpa, Head, Matrix};
use crate::error::{Error, Result};
use crate::features::{z_score, FitnessFeatures, MraFeatures};
use crate::rng::Rng;

/// `Δσ` is clamped to `[e^-c, e^c]`.
pub const DELTA_SIGMA_LOG_CLAMP: f64 = 10.0;
/// Ages enter the sampling operator as `tanh(age / AGE_SCALE)`.
pub const AGE_SCALE: f64 = 20.0;

fn project(x: &Matrix, w: &Matrix, what: &'static str) -> Result<Matrix> {
    x.matmul(w).map_err(|_| Error::shape(what, format!("features {:?} vs weights {:?}", x.shape(), w.shape())))
}

/// Runs all heads with queries from `q_in` and keys/values from `kv_in`.
fn attend(
    heads: &[HeadWeights],
    out: Option<&Matrix>,
    q_in: &Matrix,
    kv_in: &Matrix,
    what: &'static str,
) -> Result<Matrix> {
    if heads.len() == 1 {
        let h = &heads[0];
        return sdpa(&project(q_in, &h.query, what)?, &project(kv_in, &h.key, what)?, &project(kv_in, &h.value, what)?);
    }
    let out = out.ok_or(Error::MissingWeights(what))?;
    let projected = heads
        .iter()
        .map(|h| {
            Ok(Head {
                q: project(q_in, &h.query, what)?,
                k: project(kv_in, &h.key, what)?,
                v: project(kv_in, &h.value, what)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    multi_head_sdpa(&projected, out)
}

/// Selection logits `E × (N+1)`: child columns followed by the constant
/// keep-parent column of ones.
pub fn learned_selection_logits(
    params: &LgaParams,
    parents: &FitnessFeatures,
    children: &FitnessFeatures,
) -> Result<Matrix> {
    let w = &params.selection;
    let a = attend(&w.heads, w.out.as_ref(), parents.matrix(), children.matrix(), "selection")?;
    let q = project(&a, &w.query, "selection")?;
    let k = project(children.matrix(), &w.key, "selection")?;
    let scale = 1.0 / (params.config().d_k as f64).sqrt();
    let m = q.matmul_transposed(&k)?;
    let (e, n) = m.shape();
    let mut data = Vec::with_capacity(e * (n + 1));
    for row in m.row_iter() {
        data.extend(row.iter().map(|v| v * scale));
        data.push(1.0);
    }
    Matrix::from_vec(e, n + 1, data)
}

/// Row-stochastic selection matrix `M^S`.
pub fn learned_selection_probs(
    params: &LgaParams,
    parents: &FitnessFeatures,
    children: &FitnessFeatures,
) -> Result<Matrix> {
    row_softmax(&learned_selection_logits(params, parents, children)?)
}

/// One categorical draw per parent row. `choices[i] < n_children` means
/// parent `i` is replaced by that child; `choices[i] == n_children` keeps it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionSample {
    pub choices: Vec<usize>,
    pub n_children: usize,
}

impl SelectionSample {
    /// Dense 0/1 view with exactly one 1 per row.
    pub fn to_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(self.choices.len(), self.n_children + 1);
        for (i, &c) in self.choices.iter().enumerate() {
            m[(i, c)] = 1.0;
        }
        m
    }

    pub fn keep_all(n_parents: usize, n_children: usize) -> Self {
        Self { choices: vec![n_children; n_parents], n_children }
    }
}

/// Inverse-CDF draw from a probability row using one uniform variate.
pub(crate) fn categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // u landed in the rounding gap above the cumulative sum; take the last
    // entry with positive mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

pub fn sample_selection(probs: &Matrix, rng: &mut Rng) -> SelectionSample {
    SelectionSample {
        choices: probs.row_iter().map(|row| categorical(row, rng)).collect(),
        n_children: probs.cols() - 1,
    }
}

/// Writes the sampled replacements into a copy of the archive. Replaced rows
/// take the child's `(x, f, σ)` and reset their age; kept rows age by one.
pub fn apply_selection(
    sample: &SelectionSample,
    children: &Population,
    archive: &ParentArchive,
) -> Result<ParentArchive> {
    if sample.choices.len() != archive.len() || sample.n_children != children.len() {
        return Err(Error::shape(
            "apply_selection",
            format!(
                "sample {}x{} vs {} parents and {} children",
                sample.choices.len(),
                sample.n_children + 1,
                archive.len(),
                children.len()
            ),
        ));
    }
    if children.x.cols() != archive.dim() {
        return Err(Error::shape("apply_selection", "child and parent dimensions differ"));
    }
    let mut next = archive.clone();
    for (i, &c) in sample.choices.iter().enumerate() {
        if c < sample.n_children {
            next.x.row_mut(i).copy_from_slice(children.x.row(c));
            next.f[i] = children.f[c];
            next.sigma[i] = children.sigma[c];
            next.age[i] = 0;
        } else {
            next.age[i] = next.age[i].saturating_add(1);
        }
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MraOutput {
    /// Child mutation rates `Δσ ⊙ σ`.
    pub sigma: Vec<f64>,
    /// Multiplicative adaptation factors.
    pub delta: Vec<f64>,
}

/// Self-attention over sampled-parent features producing a multiplicative
/// mutation-rate change per child.
pub fn learned_mra(params: &LgaParams, features: &MraFeatures, sigma: &[f64]) -> Result<MraOutput> {
    if features.len() != sigma.len() {
        return Err(Error::shape("learned_mra", format!("{} feature rows vs {} sigmas", features.len(), sigma.len())));
    }
    let w = &params.mra;
    let x = features.matrix();
    let a = attend(&w.heads, w.out.as_ref(), x, x, "mra")?;
    let logits = project(&a, &w.sigma, "mra")?;
    let lo = (-DELTA_SIGMA_LOG_CLAMP).exp();
    let hi = DELTA_SIGMA_LOG_CLAMP.exp();
    let delta: Vec<f64> = logits.as_slice().iter().map(|&l| (0.5 * l).exp().clamp(lo, hi)).collect();
    let sigma = delta.iter().zip(sigma).map(|(d, s)| d * s).collect();
    Ok(MraOutput { sigma, delta })
}

/// Parent sampling distribution from self-attention over fitness and age features.
pub fn learned_sampling_probs(params: &LgaParams, parents: &FitnessFeatures, age: &[u32]) -> Result<Vec<f64>> {
    let w = params.sampling.as_ref().ok_or(Error::MissingWeights("sampling"))?;
    if age.len() != parents.len() {
        return Err(Error::shape("learned_sampling_probs", "age and feature rows differ"));
    }
    let ages: Vec<f64> = age.iter().map(|&a| (f64::from(a) / AGE_SCALE).tanh()).collect();
    let x = parents.matrix().hcat(&Matrix::column_vector(&ages))?;
    let p = sdpa(
        &project(&x, &w.query, "sampling")?,
        &project(&x, &w.key, "sampling")?,
        &project(&x, &w.value, "sampling")?,
    )?;
    let mut probs = p.into_vec();
    attention::softmax_in_place(&mut probs);
    Ok(probs)
}

/// Per-dimension diversity features: z-score across parents and its magnitude.
pub(crate) fn diversity_features(column: &[f64]) -> Result<Matrix> {
    let z = z_score(column)?;
    let data = z.iter().flat_map(|&v| [v, v.abs()]).collect();
    Ok(Matrix::from_vec_unchecked(column.len(), 2, data))
}

/// Additive self-attention cross-over applied independently to every dimension.
pub fn learned_crossover(params: &LgaParams, parents: &FitnessFeatures, x: &Matrix) -> Result<Matrix> {
    let w = params.crossover.as_ref().ok_or(Error::MissingWeights("crossover"))?;
    if parents.len() != x.rows() {
        return Err(Error::shape("learned_crossover", "feature rows and archive rows differ"));
    }
    let mut out = x.clone();
    for d in 0..x.cols() {
        let col = x.column(d);
        let inputs = parents.matrix().hcat(&diversity_features(&col)?)?;
        let z = sdpa(
            &project(&inputs, &w.query, "crossover")?,
            &project(&inputs, &w.key, "crossover")?,
            &project(&inputs, &w.value, "crossover")?,
        )?;
        let delta = project(&z, &w.delta, "crossover")?;
        for i in 0..x.rows() {
            out[(i, d)] += delta[(i, 0)];
        }
    }
    Ok(out)
}
