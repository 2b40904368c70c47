//! Ask/tell genetic-algorithm loop with pluggable operator slots.
//!
//! Random draws happen in a fixed order per generation: parent sampling,
//! mutation-rate adaptation, Gaussian mutation (all in [`GaState::ask`]),
//! then learned selection and group-rate resampling (in [`GaState::tell`]).
//! Objective noise uses a separate stream so that it never shifts the GA's
//! own draws.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::attention::Matrix;
use crate::error::{Error, Result};
use crate::features::{
    build_joint_fitness_features, build_sampled_parent_features, fitness_features, sanitize_fitness, FitnessFeatures,
};
use crate::operators::{
    apply_selection, gaussian_mutate, gesmr_adapt, gesmr_group_improvements, learned_crossover, learned_mra,
    learned_sampling_probs, learned_selection_logits, mr_one_fifth, sample_indices, sample_selection, samr_adapt,
    truncation_selection, uniform_sample_parents, LgaParams, ParentArchive, Population,
};
use crate::problem::Objective;
use crate::rng::{self, Rng};

/// Default SAMR meta-mutation rate.
pub const DEFAULT_META_MR: f64 = 1.5;
/// Default GESMR group count.
pub const DEFAULT_GROUPS: usize = 8;
/// Learned child rates are kept inside this range so long runs neither
/// underflow to zero nor overflow.
pub const LEARNED_SIGMA_RANGE: (f64, f64) = (1e-30, 1e30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionSlot {
    Learned,
    Truncation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MraSlot {
    Learned,
    Fixed,
    OneFifth,
    Samr { meta_mr: f64 },
    Gesmr { groups: usize },
}

impl MraSlot {
    pub fn samr() -> Self {
        Self::Samr { meta_mr: DEFAULT_META_MR }
    }

    pub fn gesmr() -> Self {
        Self::Gesmr { groups: DEFAULT_GROUPS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingSlot {
    Uniform,
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossoverSlot {
    None,
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub pop_size: usize,
    /// Fraction of the population kept as parents; `0` means a single parent.
    pub elite_ratio: f64,
    pub sigma_init: f64,
    pub selection: SelectionSlot,
    pub mra: MraSlot,
    pub sampling: SamplingSlot,
    pub crossover: CrossoverSlot,
    pub generations: usize,
    pub seed: u64,
    /// Record per-generation features, logits and rate factors.
    pub debug: bool,
}

impl GaConfig {
    /// Truncation selection with a fixed mutation rate.
    pub fn gaussian(pop_size: usize, elite_ratio: f64, sigma_init: f64, generations: usize) -> Self {
        Self {
            pop_size,
            elite_ratio,
            sigma_init,
            selection: SelectionSlot::Truncation,
            mra: MraSlot::Fixed,
            sampling: SamplingSlot::Uniform,
            crossover: CrossoverSlot::None,
            generations,
            seed: 0,
            debug: false,
        }
    }

    /// Learned selection and learned mutation-rate adaptation with `E = N`.
    pub fn lga(pop_size: usize, sigma_init: f64, generations: usize) -> Self {
        Self {
            elite_ratio: 1.0,
            selection: SelectionSlot::Learned,
            mra: MraSlot::Learned,
            ..Self::gaussian(pop_size, 1.0, sigma_init, generations)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `E = ⌈ρN⌉`, at least one.
    pub fn elite_count(&self) -> usize {
        ((self.elite_ratio * self.pop_size as f64).ceil() as usize).clamp(1, self.pop_size.max(1))
    }

    pub fn needs_params(&self) -> bool {
        self.selection == SelectionSlot::Learned
            || self.mra == MraSlot::Learned
            || self.sampling == SamplingSlot::Learned
            || self.crossover == CrossoverSlot::Learned
    }

    pub fn validate(&self) -> Result<()> {
        if self.pop_size == 0 {
            return Err(Error::InvalidConfig("population size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.elite_ratio) {
            return Err(Error::InvalidConfig(format!("elite ratio {} outside [0, 1]", self.elite_ratio)));
        }
        if !self.sigma_init.is_finite() || self.sigma_init < 0.0 {
            return Err(Error::InvalidConfig("initial mutation rate must be finite and non-negative".into()));
        }
        // Every other rate rule needs a positive rate to adapt.
        if self.sigma_init == 0.0 && self.mra != MraSlot::Fixed {
            return Err(Error::InvalidConfig("a zero initial mutation rate requires the fixed rate rule".into()));
        }
        match self.mra {
            MraSlot::Samr { meta_mr } if !(meta_mr > 0.0 && meta_mr.is_finite()) => {
                return Err(Error::InvalidConfig("meta mutation rate must be positive".into()));
            }
            MraSlot::Gesmr { groups } if groups == 0 || self.pop_size % groups != 0 => {
                return Err(Error::InvalidConfig(format!(
                    "{groups} rate groups do not evenly divide a population of {}",
                    self.pop_size
                )));
            }
            _ => {}
        }
        Ok(())
    }

    fn check_params(&self, params: Option<&LgaParams>) -> Result<()> {
        if !self.needs_params() {
            return Ok(());
        }
        let p = params.ok_or(Error::MissingWeights("lga"))?;
        if self.sampling == SamplingSlot::Learned && p.sampling.is_none() {
            return Err(Error::MissingWeights("sampling"));
        }
        if self.crossover == CrossoverSlot::Learned && p.crossover.is_none() {
            return Err(Error::MissingWeights("crossover"));
        }
        Ok(())
    }
}

/// Initial archive positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Init {
    /// Uniform in `[low, high]^D`.
    Box { low: f64, high: f64 },
    /// Every parent starts at this point.
    Point(Vec<f64>),
}

impl Default for Init {
    fn default() -> Self {
        Self::Box { low: -5.0, high: 5.0 }
    }
}

/// Per-generation quantities recorded only in debug mode.
#[derive(Debug, Clone, PartialEq)]
pub struct DebugRecord {
    pub generation: usize,
    /// Child rows of the joint fitness features used for selection.
    pub child_features: Option<Matrix>,
    pub parent_features: Option<Matrix>,
    /// Selection logits `E × (N+1)` including the keep column.
    pub logits: Option<Matrix>,
    pub probs: Option<Matrix>,
    /// Multiplicative rate change per child.
    pub delta_sigma: Option<Vec<f64>>,
    pub sampled: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub fitness: Vec<f64>,
    pub best_of_gen: f64,
    pub best_so_far: f64,
    pub mean_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub records: Vec<GenerationRecord>,
    pub debug: Vec<DebugRecord>,
    pub best_x: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Best-so-far after the last generation, `+∞` for an empty run.
    pub fn final_best(&self) -> f64 {
        self.records.last().map_or(f64::INFINITY, |r| r.best_so_far)
    }

    /// Best fitness of the first generation, `+∞` for an empty run.
    pub fn initial_best(&self) -> f64 {
        self.records.first().map_or(f64::INFINITY, |r| r.best_of_gen)
    }

    /// Fitness tensor `T × N`.
    pub fn fitness_matrix(&self) -> Result<Matrix> {
        let rows: Vec<Vec<f64>> = self.records.iter().map(|r| r.fitness.clone()).collect();
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, 0));
        }
        Matrix::from_rows(&rows)
    }

    /// Writes `generation, best_of_gen, best_so_far, mean_sigma` and, when
    /// `wide`, one `f_<j>` column per population member.
    pub fn write_csv<W: Write>(&self, writer: W, wide: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let n = self.records.first().map_or(0, |r| r.fitness.len());
        let mut header: Vec<String> =
            ["generation", "best_of_gen", "best_so_far", "mean_sigma"].map(String::from).to_vec();
        if wide {
            header.extend((0..n).map(|j| format!("f_{j}")));
        }
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.generation.to_string(),
                r.best_of_gen.to_string(),
                r.best_so_far.to_string(),
                r.mean_sigma.to_string(),
            ];
            if wide {
                row.extend(r.fitness.iter().map(f64::to_string));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything [`GaState::tell`] needs to remember from the matching ask.
#[derive(Debug, Clone)]
struct Pending {
    sampled: Vec<usize>,
    parent_f: Vec<f64>,
    delta_sigma: Option<Vec<f64>>,
}

/// Mutation-rate state that lives outside the archive.
#[derive(Debug, Clone, PartialEq)]
enum RateState {
    None,
    Global(f64),
    Groups(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct GaState {
    config: GaConfig,
    archive: ParentArchive,
    best_f: f64,
    best_x: Option<Vec<f64>>,
    generation: usize,
    rng: Rng,
    rates: RateState,
    pending: Option<Pending>,
    debug: Vec<DebugRecord>,
}

impl GaState {
    /// Fresh archive with `f = +∞`, `σ = σ₀` and zero ages.
    pub fn new(config: &GaConfig, dim: usize, init: &Init) -> Result<Self> {
        config.validate()?;
        if dim == 0 {
            return Err(Error::InvalidArgument("search dimension must be at least 1".into()));
        }
        let e = config.elite_count();
        let mut rng = rng::derive(config.seed, &[rng::stream::GA]);
        let x = match init {
            Init::Box { low, high } => {
                if !(low < high) || !low.is_finite() || !high.is_finite() {
                    return Err(Error::InvalidArgument(format!("empty init box [{low}, {high}]")));
                }
                let data = (0..e * dim).map(|_| rng.random_range(*low..*high)).collect();
                Matrix::from_vec(e, dim, data)?
            }
            Init::Point(p) => {
                if p.len() != dim {
                    return Err(Error::shape(
                        "GaState::new",
                        format!("init point has {} entries, expected {dim}", p.len()),
                    ));
                }
                Matrix::from_vec(e, dim, p.iter().copied().cycle().take(e * dim).collect())?
            }
        };
        let archive = ParentArchive::new(x, vec![f64::INFINITY; e], vec![config.sigma_init; e])?;
        let rates = match config.mra {
            MraSlot::OneFifth => RateState::Global(config.sigma_init),
            MraSlot::Gesmr { groups } => RateState::Groups(vec![config.sigma_init; groups]),
            _ => RateState::None,
        };
        Ok(Self {
            config: config.clone(),
            archive,
            best_f: f64::INFINITY,
            best_x: None,
            generation: 0,
            rng,
            rates,
            pending: None,
            debug: Vec::new(),
        })
    }

    pub fn config(&self) -> &GaConfig {
        &self.config
    }

    pub fn archive(&self) -> &ParentArchive {
        &self.archive
    }

    pub fn best_so_far(&self) -> f64 {
        self.best_f
    }

    pub fn best_x(&self) -> Option<&[f64]> {
        self.best_x.as_deref()
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    /// Debug records accumulated so far.
    pub fn take_debug(&mut self) -> Vec<DebugRecord> {
        std::mem::take(&mut self.debug)
    }

    fn archive_features(&self) -> Result<FitnessFeatures> {
        fitness_features(&sanitize_fitness(&self.archive.f)?, self.best_f)
    }

    /// Proposes `N` children and their mutation rates.
    pub fn ask(&mut self, params: Option<&LgaParams>) -> Result<(Matrix, Vec<f64>)> {
        self.config.check_params(params)?;
        let n = self.config.pop_size;
        let learned = params.filter(|_| self.config.needs_params());

        let needs_parent_features =
            self.config.sampling == SamplingSlot::Learned || self.config.crossover == CrossoverSlot::Learned;
        let parent_features = if needs_parent_features { Some(self.archive_features()?) } else { None };

        let base_x = match (self.config.crossover, learned, &parent_features) {
            (CrossoverSlot::Learned, Some(p), Some(fp)) => learned_crossover(p, fp, &self.archive.x)?,
            _ => self.archive.x.clone(),
        };

        let sampled = match (self.config.sampling, learned, &parent_features) {
            (SamplingSlot::Learned, Some(p), Some(fp)) => {
                let probs = learned_sampling_probs(p, fp, &self.archive.age)?;
                sample_indices(&probs, n, &mut self.rng)
            }
            _ => uniform_sample_parents(&self.archive, n, &mut self.rng),
        };
        let parent_x = base_x.select_rows(&sampled);
        let parent_f: Vec<f64> = sampled.iter().map(|&i| self.archive.f[i]).collect();
        let parent_sigma: Vec<f64> = sampled.iter().map(|&i| self.archive.sigma[i]).collect();

        let mut delta_sigma = None;
        let sigma: Vec<f64> = match self.config.mra {
            MraSlot::Fixed => vec![self.config.sigma_init; n],
            MraSlot::OneFifth => match self.rates {
                RateState::Global(s) => vec![s; n],
                _ => unreachable!("one-fifth state is global"),
            },
            MraSlot::Samr { meta_mr } => parent_sigma.iter().map(|&s| samr_adapt(s, meta_mr, &mut self.rng)).collect(),
            MraSlot::Gesmr { groups } => match &self.rates {
                RateState::Groups(g) => (0..n).map(|j| g[j / (n / groups)]).collect(),
                _ => unreachable!("group rates are per group"),
            },
            MraSlot::Learned => {
                let p = learned.ok_or(Error::MissingWeights("mra"))?;
                let feats = build_sampled_parent_features(&sanitize_fitness(&parent_f)?, &parent_sigma, self.best_f)?;
                let out = learned_mra(p, &feats, &parent_sigma)?;
                delta_sigma = Some(out.delta);
                let (lo, hi) = LEARNED_SIGMA_RANGE;
                out.sigma.into_iter().map(|s| s.clamp(lo, hi)).collect()
            }
        };
        if sigma.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("child mutation rates"));
        }

        let children = gaussian_mutate(&parent_x, &sigma, &mut self.rng)?;
        if !children.is_finite() {
            return Err(Error::NonFinite("children"));
        }
        self.pending = Some(Pending { sampled, parent_f, delta_sigma });
        Ok((children, sigma))
    }

    /// Integrates evaluated children into the archive.
    pub fn tell(&mut self, params: Option<&LgaParams>, x: Matrix, f: Vec<f64>, sigma: Vec<f64>) -> Result<()> {
        let n = self.config.pop_size;
        if x.rows() != n || x.cols() != self.archive.dim() {
            return Err(Error::shape(
                "GaState::tell",
                format!("expected {n}x{} children, got {:?}", self.archive.dim(), x.shape()),
            ));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("child fitness"));
        }
        let children = Population::new(x, f, sigma)?;
        let pending = self.pending.take();
        let mut record = self.config.debug.then(|| DebugRecord {
            generation: self.generation,
            child_features: None,
            parent_features: None,
            logits: None,
            probs: None,
            delta_sigma: pending.as_ref().and_then(|p| p.delta_sigma.clone()),
            sampled: pending.as_ref().map(|p| p.sampled.clone()).unwrap_or_default(),
        });

        let next = match self.config.selection {
            SelectionSlot::Truncation => truncation_selection(&children, &self.archive)?,
            SelectionSlot::Learned => {
                let p = params.ok_or(Error::MissingWeights("selection"))?;
                let joint: Vec<f64> = children.f.iter().chain(&self.archive.f).copied().collect();
                let joint = sanitize_fitness(&joint)?;
                let feats = build_joint_fitness_features(&joint[..n], &joint[n..], self.best_f)?;
                let logits = learned_selection_logits(p, &feats.parents, &feats.children)?;
                let probs = crate::attention::row_softmax(&logits)?;
                let sample = sample_selection(&probs, &mut self.rng);
                if let Some(r) = record.as_mut() {
                    r.child_features = Some(feats.children.matrix().clone());
                    r.parent_features = Some(feats.parents.matrix().clone());
                    r.logits = Some(logits);
                    r.probs = Some(probs);
                }
                apply_selection(&sample, &children, &self.archive)?
            }
        };

        if let Some(pending) = &pending {
            match (&mut self.rates, self.config.mra) {
                (RateState::Global(s), _) => {
                    let wins = children.f.iter().zip(&pending.parent_f).filter(|(c, p)| c < p).count();
                    *s = mr_one_fifth(*s, wins, n);
                }
                (RateState::Groups(g), MraSlot::Gesmr { groups }) => {
                    let imp = gesmr_group_improvements(&children.f, &pending.parent_f, groups)?;
                    *g = gesmr_adapt(g, &imp, n, &mut self.rng)?;
                }
                _ => {}
            }
        }

        if let Some((j, &fj)) = children.f.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)) {
            if fj < self.best_f {
                self.best_f = fj;
                self.best_x = Some(children.x.row(j).to_vec());
            }
        }
        self.archive = next;
        self.generation += 1;
        if let Some(r) = record {
            self.debug.push(r);
        }
        Ok(())
    }
}

/// Runs `T` generations from a uniform `[-5, 5]^D` archive.
pub fn run<O: Objective + ?Sized>(config: &GaConfig, params: Option<&LgaParams>, problem: &O) -> Result<Trajectory> {
    run_with_init(config, params, problem, &Init::default())
}

pub fn run_with_init<O: Objective + ?Sized>(
    config: &GaConfig,
    params: Option<&LgaParams>,
    problem: &O,
    init: &Init,
) -> Result<Trajectory> {
    config.check_params(params)?;
    let mut state = GaState::new(config, problem.dim(), init)?;
    let mut noise = rng::derive(config.seed, &[rng::stream::NOISE]);
    let mut records = Vec::with_capacity(config.generations);
    for t in 0..config.generations {
        let (x, sigma) = state.ask(params)?;
        let f = problem.evaluate(&x, &mut noise)?;
        let best_of_gen = f.iter().copied().fold(f64::INFINITY, f64::min);
        let mean_sigma = sigma.iter().sum::<f64>() / sigma.len() as f64;
        state.tell(params, x, f.clone(), sigma)?;
        records.push(GenerationRecord {
            generation: t,
            fitness: f,
            best_of_gen,
            best_so_far: state.best_so_far(),
            mean_sigma,
        });
    }
    Ok(Trajectory { records, debug: state.take_debug(), best_x: state.best_x })
}
