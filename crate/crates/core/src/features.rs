//! Scale-invariant fitness and mutation-rate features.
//!
//! Fitness rows carry `[z-score, centered rank, improvement flag]`; mutation
//! rate rows carry `[z-score, min-max map to [-1, 1]]`. Every transform is
//! invariant to positive affine rescaling of its input and equivariant to
//! permutations of it.

use crate::attention::Matrix;
use crate::error::{Error, Result};

/// Number of fitness feature columns.
pub const FITNESS_DIM: usize = 3;
/// Number of mutation-rate feature columns.
pub const SIGMA_DIM: usize = 2;

pub const COL_Z: usize = 0;
pub const COL_RANK: usize = 1;
pub const COL_FLAG: usize = 2;

/// Standard deviations below this are treated as zero.
pub const ZERO_VARIANCE: f64 = 1e-10;

/// `rows × 3` fitness features.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessFeatures(pub(crate) Matrix);

impl FitnessFeatures {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn z(&self) -> Vec<f64> {
        self.0.column(COL_Z)
    }

    pub fn ranks(&self) -> Vec<f64> {
        self.0.column(COL_RANK)
    }

    pub fn flags(&self) -> Vec<f64> {
        self.0.column(COL_FLAG)
    }

    /// Wraps an externally produced matrix (e.g. a dumped feature table).
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if m.cols() != FITNESS_DIM {
            return Err(Error::shape("FitnessFeatures", format!("expected {FITNESS_DIM} columns, got {}", m.cols())));
        }
        Ok(Self(m))
    }
}

/// `rows × 2` mutation-rate features.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaFeatures(pub(crate) Matrix);

impl SigmaFeatures {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

/// Sampled-parent fitness features concatenated with their sigma features.
#[derive(Debug, Clone, PartialEq)]
pub struct MraFeatures(pub(crate) Matrix);

impl MraFeatures {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }
}

/// Joint parent/child features split back into their blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct JointFeatures {
    pub all: FitnessFeatures,
    pub children: FitnessFeatures,
    pub parents: FitnessFeatures,
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Ascending ranks mapped to `[-0.5, 0.5]`; tied values share their average rank.
pub fn centered_ranks(f: &[f64]) -> Result<Vec<f64>> {
    check_finite(f, "centered_ranks input")?;
    let n = f.len();
    if n == 0 {
        return Err(Error::InvalidArgument("centered_ranks of an empty vector".into()));
    }
    if n == 1 {
        return Ok(vec![0.0]);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| f[a].total_cmp(&f[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && f[order[end]] == f[order[start]] {
            end += 1;
        }
        let avg = (start + end - 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    let denom = (n - 1) as f64;
    Ok(ranks.into_iter().map(|r| r / denom - 0.5).collect())
}

/// `(f - mean) / std` with the population standard deviation; all zeros when
/// the spread is below [`ZERO_VARIANCE`].
pub fn z_score(f: &[f64]) -> Result<Vec<f64>> {
    check_finite(f, "z_score input")?;
    if f.is_empty() {
        return Ok(Vec::new());
    }
    let n = f.len() as f64;
    let mean = f.iter().sum::<f64>() / n;
    let var = f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < ZERO_VARIANCE {
        return Ok(vec![0.0; f.len()]);
    }
    Ok(f.iter().map(|v| (v - mean) / std).collect())
}

/// `2(x - min)/(max - min) - 1`, zeros for a constant vector.
pub fn min_max_signed(x: &[f64]) -> Result<Vec<f64>> {
    check_finite(x, "min_max input")?;
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    if !(span > 0.0) {
        return Ok(vec![0.0; x.len()]);
    }
    Ok(x.iter().map(|v| 2.0 * (v - min) / span - 1.0).collect())
}

/// Fitness features computed over `f` alone. The flag marks entries strictly
/// below `best_so_far` (which may be `+∞` before anything was evaluated).
pub fn fitness_features(f: &[f64], best_so_far: f64) -> Result<FitnessFeatures> {
    if best_so_far.is_nan() {
        return Err(Error::NonFinite("best_so_far"));
    }
    let z = z_score(f)?;
    let r = centered_ranks(f)?;
    let mut data = Vec::with_capacity(f.len() * FITNESS_DIM);
    for i in 0..f.len() {
        data.extend_from_slice(&[z[i], r[i], if f[i] < best_so_far { 1.0 } else { 0.0 }]);
    }
    Ok(FitnessFeatures(Matrix::from_vec_unchecked(f.len(), FITNESS_DIM, data)))
}

/// Features over the concatenation `[children, parents]`, split into the
/// child block (first `N` rows) and the parent block (last `E` rows).
pub fn build_joint_fitness_features(f_children: &[f64], f_parents: &[f64], best_so_far: f64) -> Result<JointFeatures> {
    if f_children.is_empty() || f_parents.is_empty() {
        return Err(Error::InvalidArgument("joint features need at least one child and one parent".into()));
    }
    let joint: Vec<f64> = f_children.iter().chain(f_parents).copied().collect();
    let all = fitness_features(&joint, best_so_far)?;
    let n = f_children.len();
    let children = FitnessFeatures(all.0.slice_rows(0, n));
    let parents = FitnessFeatures(all.0.slice_rows(n, joint.len()));
    Ok(JointFeatures { all, children, parents })
}

pub fn sigma_features(sigma: &[f64]) -> Result<SigmaFeatures> {
    if sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidArgument("mutation rates must be finite and positive".into()));
    }
    let z = z_score(sigma)?;
    let mm = min_max_signed(sigma)?;
    let data = z.iter().zip(&mm).flat_map(|(a, b)| [*a, *b]).collect();
    Ok(SigmaFeatures(Matrix::from_vec_unchecked(sigma.len(), SIGMA_DIM, data)))
}

/// Fresh fitness features over the sampled parents, joined with their sigma features.
pub fn build_sampled_parent_features(
    f_sampled: &[f64],
    sigma_sampled: &[f64],
    best_so_far: f64,
) -> Result<MraFeatures> {
    if f_sampled.len() != sigma_sampled.len() {
        return Err(Error::shape(
            "build_sampled_parent_features",
            format!("{} fitnesses vs {} sigmas", f_sampled.len(), sigma_sampled.len()),
        ));
    }
    let s = sigma_features(sigma_sampled)?;
    let f = fitness_features(f_sampled, best_so_far)?;
    Ok(MraFeatures(f.0.hcat(&s.0)?))
}

/// Replaces `+∞` (never-evaluated archive slots) by the largest finite value
/// in the slice so they rank as tied-worst. NaN and `-∞` are rejected.
pub fn sanitize_fitness(f: &[f64]) -> Result<Vec<f64>> {
    if f.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
        return Err(Error::NonFinite("fitness"));
    }
    let worst = f.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let fill = if worst.is_finite() { worst } else { 0.0 };
    Ok(f.iter().map(|&v| if v.is_finite() { v } else { fill }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Average-rank oracle: count strictly smaller and equal entries.
    fn rank_oracle(f: &[f64]) -> Vec<f64> {
        let n = f.len();
        f.iter()
            .map(|&x| {
                let less = f.iter().filter(|&&y| y < x).count() as f64;
                let eq = f.iter().filter(|&&y| y == x).count() as f64;
                let avg = less + (eq - 1.0) / 2.0;
                if n == 1 {
                    0.0
                } else {
                    avg / (n - 1) as f64 - 0.5
                }
            })
            .collect()
    }

    #[test]
    fn centered_rank_examples() {
        assert_eq!(centered_ranks(&[3.0, 1.0, 2.0]).unwrap(), vec![0.5, -0.5, 0.0]);
        assert_eq!(centered_ranks(&[5.0]).unwrap(), vec![0.0]);
        assert_eq!(rank_oracle(&[2.0, 2.0, 7.0]), vec![-0.25, -0.25, 0.5]);
        assert_eq!(centered_ranks(&[2.0, 2.0, 7.0]).unwrap(), vec![-0.25, -0.25, 0.5]);
        assert!(centered_ranks(&[1.0, f64::NAN]).is_err());
        assert!(centered_ranks(&[]).is_err());
    }

    #[test]
    fn z_score_examples() {
        let z = z_score(&[1.0, 2.0, 3.0]).unwrap();
        let expect = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((z[0] + expect).abs() < 1e-12 && z[1].abs() < 1e-12 && (z[2] - expect).abs() < 1e-12);
        assert!((expect - 1.2247).abs() < 1e-4);
        assert_eq!(z_score(&[4.0, 4.0, 4.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(z_score(&[0.0, 10.0]).unwrap(), vec![-1.0, 1.0]);
    }

    #[test]
    fn joint_features_example() {
        let j = build_joint_fitness_features(&[1.0, 3.0], &[2.0], 2.0).unwrap();
        assert_eq!(j.all.ranks(), vec![-0.5, 0.5, 0.0]);
        assert_eq!(j.all.flags(), vec![1.0, 0.0, 0.0]);
        assert_eq!(j.children.len(), 2);
        assert_eq!(j.parents.ranks(), vec![0.0]);
    }

    #[test]
    fn joint_features_degenerate() {
        let j = build_joint_fitness_features(&[4.0, 4.0], &[4.0, 4.0], 1.0).unwrap();
        assert_eq!(j.all.z(), vec![0.0; 4]);
        assert_eq!(j.all.ranks(), vec![0.0; 4]);
        assert_eq!(j.all.flags(), vec![0.0; 4]);

        let j = build_joint_fitness_features(&[1.0, 9.0], &[3.0], f64::INFINITY).unwrap();
        assert_eq!(j.all.flags(), vec![1.0; 3]);

        assert!(build_joint_fitness_features(&[], &[1.0], 0.0).is_err());
        assert!(build_joint_fitness_features(&[1.0], &[], 0.0).is_err());
    }

    #[test]
    fn sampled_parent_features() {
        let m = build_sampled_parent_features(&[1.0, 2.0, 3.0], &[0.2; 3], 0.5).unwrap();
        assert_eq!(m.matrix().shape(), (3, FITNESS_DIM + SIGMA_DIM));
        assert_eq!(m.matrix().column(3), vec![0.0; 3]);
        assert_eq!(m.matrix().column(4), vec![0.0; 3]);

        let m = build_sampled_parent_features(&[1.0, 2.0, 3.0], &[0.1, 0.2, 0.3], 0.5).unwrap();
        let mm = m.matrix().column(4);
        assert!((mm[0] + 1.0).abs() < 1e-12 && mm[1].abs() < 1e-12 && (mm[2] - 1.0).abs() < 1e-12);

        assert!(build_sampled_parent_features(&[1.0], &[0.0], 0.5).is_err());
        assert!(build_sampled_parent_features(&[1.0], &[-1.0], 0.5).is_err());
    }

    #[test]
    fn sampled_parent_features_match_direct_formula() {
        let f = [0.3, -1.2, 4.4, 0.3, 2.0];
        let s = [0.5, 0.05, 0.2, 1.1, 0.7];
        let best = 0.0;
        let m = build_sampled_parent_features(&f, &s, best).unwrap();
        let fmean = f.iter().sum::<f64>() / 5.0;
        let fstd = (f.iter().map(|x| (x - fmean).powi(2)).sum::<f64>() / 5.0).sqrt();
        let smean = s.iter().sum::<f64>() / 5.0;
        let sstd = (s.iter().map(|x| (x - smean).powi(2)).sum::<f64>() / 5.0).sqrt();
        let ranks = rank_oracle(&f);
        for i in 0..5 {
            let row = m.matrix().row(i);
            assert!((row[0] - (f[i] - fmean) / fstd).abs() < 1e-12);
            assert_eq!(row[1], ranks[i]);
            assert_eq!(row[2], if f[i] < best { 1.0 } else { 0.0 });
            assert!((row[3] - (s[i] - smean) / sstd).abs() < 1e-12);
            assert!((row[4] - (2.0 * (s[i] - 0.05) / (1.1 - 0.05) - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn sanitize_replaces_infinity_with_worst() {
        assert_eq!(sanitize_fitness(&[1.0, f64::INFINITY, 3.0]).unwrap(), vec![1.0, 3.0, 3.0]);
        assert_eq!(sanitize_fitness(&[f64::INFINITY; 2]).unwrap(), vec![0.0; 2]);
        assert!(sanitize_fitness(&[f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn ranks_match_oracle(f in prop::collection::vec(-50i32..50, 1..40)) {
            let f: Vec<f64> = f.into_iter().map(f64::from).collect();
            prop_assert_eq!(centered_ranks(&f).unwrap(), rank_oracle(&f));
        }

        #[test]
        fn transforms_are_affine_invariant(
            f in prop::collection::vec(-100.0f64..100.0, 2..30),
            a in 0.01f64..100.0,
            b in -100.0f64..100.0,
        ) {
            let g: Vec<f64> = f.iter().map(|x| a * x + b).collect();
            // Rounding in a·x + b can merge two near-equal entries; skip those draws.
            let distinct = |v: &[f64]| { let mut s = v.to_vec(); s.sort_by(f64::total_cmp); s.windows(2).filter(|w| w[0] == w[1]).count() };
            prop_assume!(distinct(&f) == distinct(&g));
            prop_assert_eq!(centered_ranks(&f).unwrap(), centered_ranks(&g).unwrap());
            let zf = z_score(&f).unwrap();
            let zg = z_score(&g).unwrap();
            for (x, y) in zf.iter().zip(&zg) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }

        #[test]
        fn features_permutation_equivariant(
            f in prop::collection::vec(-10.0f64..10.0, 1..20),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut perm: Vec<usize> = (0..f.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let g: Vec<f64> = perm.iter().map(|&i| f[i]).collect();
            let ff = fitness_features(&f, 0.0).unwrap();
            let fg = fitness_features(&g, 0.0).unwrap();
            let expect = ff.matrix().select_rows(&perm);
            prop_assert!(expect.max_abs_diff(fg.matrix()) < 1e-12);
        }

        #[test]
        fn features_are_finite_and_bounded(
            f in prop::collection::vec(-1e6f64..1e6, 1..30),
            best in -1e6f64..1e6,
        ) {
            let ff = fitness_features(&f, best).unwrap();
            prop_assert!(ff.matrix().is_finite());
            for r in ff.ranks() { prop_assert!((-0.5..=0.5).contains(&r)); }
            for fl in ff.flags() { prop_assert!(fl == 0.0 || fl == 1.0); }
            let z = ff.z();
            let mean = z.iter().sum::<f64>() / z.len() as f64;
            prop_assert!(mean.abs() < 1e-6);
        }
    }
}
