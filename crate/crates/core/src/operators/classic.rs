//! White-box operators used by the baseline GAs.

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{ParentArchive, Population};
use crate::attention::Matrix;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const ONE_FIFTH_MIN: f64 = 1e-8;
pub const ONE_FIFTH_MAX: f64 = 1e3;

/// Draws `n` indices from `probs` with replacement.
pub fn sample_indices(probs: &[f64], n: usize, rng: &mut Rng) -> Vec<usize> {
    (0..n).map(|_| super::learned::categorical(probs, rng)).collect()
}

/// `n` parent indices drawn uniformly with replacement.
pub fn uniform_sample_parents(archive: &ParentArchive, n: usize, rng: &mut Rng) -> Vec<usize> {
    let e = archive.len();
    (0..n).map(|_| rng.random_range(0..e)).collect()
}

/// `x_j + σ_j ε_j` with `ε_j ~ N(0, I)`, drawn row by row.
pub fn gaussian_mutate(x: &Matrix, sigma: &[f64], rng: &mut Rng) -> Result<Matrix> {
    let eps: Vec<f64> = (0..x.rows() * x.cols()).map(|_| rng.sample(StandardNormal)).collect();
    gaussian_mutate_with_noise(x, sigma, &Matrix::from_vec_unchecked(x.rows(), x.cols(), eps))
}

pub fn gaussian_mutate_with_noise(x: &Matrix, sigma: &[f64], eps: &Matrix) -> Result<Matrix> {
    if sigma.len() != x.rows() || eps.shape() != x.shape() {
        return Err(Error::shape(
            "gaussian_mutate",
            format!("x {:?}, {} sigmas, noise {:?}", x.shape(), sigma.len(), eps.shape()),
        ));
    }
    if sigma.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::InvalidArgument("mutation rates must be non-negative".into()));
    }
    let mut out = x.clone();
    for (j, &s) in sigma.iter().enumerate() {
        for (o, e) in out.row_mut(j).iter_mut().zip(eps.row(j)) {
            *o += s * e;
        }
    }
    Ok(out)
}

/// Keeps the best `E` of the joint pool. The pool lists children before
/// parents, so a stable ascending sort resolves ties in favour of children
/// and then of lower indices.
pub fn truncation_selection(children: &Population, archive: &ParentArchive) -> Result<ParentArchive> {
    if children.x.cols() != archive.dim() {
        return Err(Error::shape("truncation_selection", "child and parent dimensions differ"));
    }
    let n = children.len();
    let pool_f = |k: usize| if k < n { children.f[k] } else { archive.f[k - n] };
    let mut order: Vec<usize> = (0..n + archive.len()).collect();
    order.sort_by(|&a, &b| pool_f(a).total_cmp(&pool_f(b)));

    let mut next = archive.clone();
    for (slot, &k) in order.iter().take(archive.len()).enumerate() {
        if k < n {
            next.x.row_mut(slot).copy_from_slice(children.x.row(k));
            next.f[slot] = children.f[k];
            next.sigma[slot] = children.sigma[k];
            next.age[slot] = 0;
        } else {
            let p = k - n;
            next.x.row_mut(slot).copy_from_slice(archive.x.row(p));
            next.f[slot] = archive.f[p];
            next.sigma[slot] = archive.sigma[p];
            next.age[slot] = archive.age[p].saturating_add(1);
        }
    }
    Ok(next)
}

/// Rechenberg's rule: double when at least a fifth of the trials improved,
/// halve otherwise.
pub fn mr_one_fifth(sigma: f64, successes: usize, trials: usize) -> f64 {
    let trials = trials.max(1);
    let next = if 5 * successes >= trials { sigma * 2.0 } else { sigma * 0.5 };
    next.clamp(ONE_FIFTH_MIN, ONE_FIFTH_MAX)
}

/// Self-adaptive rate: multiply or divide by `meta_mr` with equal probability.
pub fn samr_adapt(sigma: f64, meta_mr: f64, rng: &mut Rng) -> f64 {
    if rng.random_bool(0.5) {
        sigma * meta_mr
    } else {
        sigma / meta_mr
    }
}

/// Group improvement statistic: best child fitness in each group minus the
/// best fitness among the parents that group's children were sampled from.
pub fn gesmr_group_improvements(child_f: &[f64], parent_f: &[f64], groups: usize) -> Result<Vec<f64>> {
    let n = child_f.len();
    if groups == 0 || n % groups != 0 || parent_f.len() != n {
        return Err(Error::InvalidArgument(format!("{groups} groups cannot evenly partition {n} children")));
    }
    let size = n / groups;
    Ok((0..groups)
        .map(|g| {
            let r = g * size..(g + 1) * size;
            let c = child_f[r.clone()].iter().copied().fold(f64::INFINITY, f64::min);
            let p = parent_f[r].iter().copied().fold(f64::INFINITY, f64::min);
            // Never-evaluated parents count as no reference point.
            if p.is_finite() {
                c - p
            } else {
                c
            }
        })
        .collect())
}

/// The group with the lowest improvement keeps its rate; every other group
/// resamples around it as `σ_elite · exp(u)`, `u ~ U(-ln 2, ln 2)`.
pub fn gesmr_adapt(sigma_groups: &[f64], improvements: &[f64], pop_size: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    let k = sigma_groups.len();
    if k == 0 || pop_size % k != 0 || improvements.len() != k {
        return Err(Error::InvalidArgument(format!("{k} groups cannot evenly partition a population of {pop_size}")));
    }
    let elite = improvements.iter().enumerate().fold(0, |best, (i, v)| if *v < improvements[best] { i } else { best });
    let base = sigma_groups[elite];
    let ln2 = std::f64::consts::LN_2;
    Ok((0..k).map(|g| if g == elite { base } else { base * rng.random_range(-ln2..ln2).exp() }).collect())
}
