//! Evolution-strategy outer loop that meta-trains operator weights.
//!
//! Every random quantity of meta-generation `g` is derived from
//! `(seed, g, ...)` and never from the candidate or worker index: all
//! candidates see the same tasks, archive initializations and inner-loop
//! streams, so duplicate candidates score identically and results do not
//! depend on the degree of parallelism.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::attention::Matrix;
use crate::bbob::{sample_task, TaskFamily, TaskSpec};
use crate::engine::{run, GaConfig};
use crate::error::{Error, Result};
use crate::features::{centered_ranks, z_score};
use crate::operators::{LgaConfig, LgaParams};
use crate::problem::Problem;
use crate::rng::{self, stream};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// How a `T × N` fitness tensor is reduced to one score per inner run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetaObjective {
    /// Best value seen anywhere in the run.
    #[serde(rename = "minN-minT")]
    MinNMinT,
    /// Best value in the final generation.
    #[serde(rename = "minN-finalT")]
    MinNFinalT,
    /// Best per-generation population mean.
    #[serde(rename = "meanN-minT")]
    MeanNMinT,
    /// Population mean in the final generation.
    #[serde(rename = "meanN-finalT")]
    MeanNFinalT,
}

impl MetaObjective {
    pub const ALL: [MetaObjective; 4] = [Self::MinNMinT, Self::MinNFinalT, Self::MeanNMinT, Self::MeanNFinalT];

    pub fn id(self) -> &'static str {
        match self {
            Self::MinNMinT => "minN-minT",
            Self::MinNFinalT => "minN-finalT",
            Self::MeanNMinT => "meanN-minT",
            Self::MeanNFinalT => "meanN-finalT",
        }
    }

    /// Reduces a fitness tensor with one row per generation.
    pub fn reduce(self, fitness: &Matrix) -> Result<f64> {
        let (t, n) = fitness.shape();
        if t == 0 || n == 0 {
            return Err(Error::InvalidArgument("cannot reduce an empty fitness tensor".into()));
        }
        let min = |r: &[f64]| r.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = |r: &[f64]| r.iter().sum::<f64>() / r.len() as f64;
        let last = fitness.row(t - 1);
        Ok(match self {
            Self::MinNMinT => fitness.row_iter().map(min).fold(f64::INFINITY, f64::min),
            Self::MinNFinalT => min(last),
            Self::MeanNMinT => fitness.row_iter().map(mean).fold(f64::INFINITY, f64::min),
            Self::MeanNFinalT => mean(last),
        })
    }
}

impl Default for MetaObjective {
    fn default() -> Self {
        Self::MinNFinalT
    }
}

impl fmt::Display for MetaObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for MetaObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|o| o.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown meta objective `{s}`")))
    }
}

/// Geometric decay towards a floor: `v ← max(v · decay, floor)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub init: f64,
    pub decay: f64,
    pub floor: f64,
}

impl Schedule {
    pub fn learning_rate() -> Self {
        Self { init: 0.01, decay: 0.999, floor: 0.001 }
    }

    pub fn sigma() -> Self {
        Self { init: 0.1, decay: 0.999, floor: 0.001 }
    }

    pub fn step(&self, value: f64) -> f64 {
        (value * self.decay).max(self.floor)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.init >= self.floor && self.floor >= 0.0 && (0.0..=1.0).contains(&self.decay)) {
            return Err(Error::InvalidConfig(format!("bad {what} schedule {self:?}")));
        }
        Ok(())
    }
}

/// Search distribution `N(μ, σ² I)` plus Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaEsState {
    pub mean: Vec<f64>,
    pub sigma: f64,
    pub lr: f64,
    pub sigma_schedule: Schedule,
    pub lr_schedule: Schedule,
    /// Multiplicative shrinkage `μ ← (1 - λ) μ` after each update.
    pub mean_decay: f64,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    pub generation: usize,
}

impl MetaEsState {
    pub fn new(mean: Vec<f64>, sigma_schedule: Schedule, lr_schedule: Schedule, mean_decay: f64) -> Result<Self> {
        sigma_schedule.validate("sigma")?;
        lr_schedule.validate("learning-rate")?;
        if !(0.0..1.0).contains(&mean_decay) {
            return Err(Error::InvalidConfig(format!("mean decay {mean_decay} outside [0, 1)")));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("meta mean"));
        }
        let d = mean.len();
        Ok(Self {
            mean,
            sigma: sigma_schedule.init,
            lr: lr_schedule.init,
            sigma_schedule,
            lr_schedule,
            mean_decay,
            adam_m: vec![0.0; d],
            adam_v: vec![0.0; d],
            generation: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// One generation of candidates in antithetic order
/// `μ + σε₀, μ - σε₀, μ + σε₁, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    pub noise: Vec<Vec<f64>>,
    pub thetas: Vec<Vec<f64>>,
}

impl Candidates {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// Signed perturbation of candidate `i`.
    pub fn epsilon(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        self.noise[i / 2].iter().map(move |e| sign * e)
    }
}

pub fn meta_ask(state: &MetaEsState, population: usize, rng: &mut rng::Rng) -> Result<Candidates> {
    if population == 0 || population % 2 != 0 {
        return Err(Error::InvalidConfig(format!("meta population {population} must be even and positive")));
    }
    let d = state.dim();
    let mut noise = Vec::with_capacity(population / 2);
    let mut thetas = Vec::with_capacity(population);
    for _ in 0..population / 2 {
        let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        thetas.push(state.mean.iter().zip(&eps).map(|(m, e)| m + state.sigma * e).collect());
        thetas.push(state.mean.iter().zip(&eps).map(|(m, e)| m - state.sigma * e).collect());
        noise.push(eps);
    }
    Ok(Candidates { noise, thetas })
}

/// Search-gradient estimate `(1 / (M σ)) Σ_i shaped_i ε_i` with centered-rank shaping.
pub fn es_gradient(state: &MetaEsState, candidates: &Candidates, fitness: &[f64]) -> Result<Vec<f64>> {
    let m = candidates.len();
    if fitness.len() != m || candidates.noise.len() * 2 != m {
        return Err(Error::shape("es_gradient", format!("{} fitnesses for {m} candidates", fitness.len())));
    }
    let shaped = centered_ranks(fitness)?;
    let mut grad = vec![0.0; state.dim()];
    for (i, s) in shaped.iter().enumerate() {
        for (g, e) in grad.iter_mut().zip(candidates.epsilon(i)) {
            *g += s * e;
        }
    }
    let norm = 1.0 / (m as f64 * state.sigma);
    Ok(grad.into_iter().map(|g| g * norm).collect())
}

/// Adam step on `μ` with the current rate, then mean decay, then schedules.
pub fn apply_gradient(state: &mut MetaEsState, grad: &[f64]) -> Result<()> {
    if grad.len() != state.dim() {
        return Err(Error::shape("apply_gradient", "gradient and mean differ in length"));
    }
    let t = (state.generation + 1) as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..grad.len() {
        state.adam_m[i] = ADAM_BETA1 * state.adam_m[i] + (1.0 - ADAM_BETA1) * grad[i];
        state.adam_v[i] = ADAM_BETA2 * state.adam_v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
        let step = (state.adam_m[i] / c1) / ((state.adam_v[i] / c2).sqrt() + ADAM_EPS);
        state.mean[i] -= state.lr * step;
    }
    if state.mean_decay > 0.0 {
        let keep = 1.0 - state.mean_decay;
        state.mean.iter_mut().for_each(|m| *m *= keep);
    }
    state.lr = state.lr_schedule.step(state.lr);
    state.sigma = state.sigma_schedule.step(state.sigma);
    state.generation += 1;
    Ok(())
}

/// Lower meta-fitness is better.
pub fn meta_tell(state: &mut MetaEsState, candidates: &Candidates, fitness: &[f64]) -> Result<()> {
    let grad = es_gradient(state, candidates, fitness)?;
    apply_gradient(state, &grad)
}

/// Z-scores each task column across members (non-finite entries become the
/// column's worst finite score) and takes each member's median across tasks.
pub fn meta_fitness(scores: &Matrix) -> Result<Vec<f64>> {
    let (m, j) = scores.shape();
    if m == 0 || j == 0 {
        return Err(Error::InvalidArgument("meta fitness needs at least one member and one task".into()));
    }
    let mut z = Matrix::zeros(m, j);
    for c in 0..j {
        let col = scores.column(c);
        let worst = col.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        if worst == f64::NEG_INFINITY {
            continue;
        }
        let col: Vec<f64> = col.into_iter().map(|v| if v.is_finite() { v } else { worst }).collect();
        for (r, v) in z_score(&col)?.into_iter().enumerate() {
            z[(r, c)] = v;
        }
    }
    Ok(z.row_iter().map(median).collect())
}

/// Median with the even-length case averaging the two middle values.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Scores one parameter vector on a task with a fixed inner-loop seed.
/// Failed runs score `NaN`.
pub fn inner_score(
    params: &LgaParams,
    task: &TaskSpec,
    pop_size: usize,
    generations: usize,
    objective: MetaObjective,
    seed: u64,
) -> f64 {
    let config = GaConfig::lga(pop_size, task.sigma_init, generations).with_seed(seed);
    run(&config, Some(params), task).and_then(|t| objective.reduce(&t.fitness_matrix()?)).unwrap_or(f64::NAN)
}

pub const DEFAULT_INIT_STD: f64 = 0.5;

/// How the meta-mean starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeanInit {
    /// Stationary under antithetic sampling: the rate operator is even in the
    /// perturbation at zero weights, so paired candidates tie.
    Zero,
    /// Independent `N(0, std²)` entries.
    Normal { std: f64 },
}

/// Periodic evaluation of the current meta-mean on fixed tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Every `interval` meta-generations (and at generation 0); `0` disables.
    pub interval: usize,
    /// `(task id, dimension)` pairs.
    pub tasks: Vec<(String, usize)>,
    pub seeds: usize,
    pub pop_size: usize,
    pub generations: usize,
    pub sigma_init: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            interval: 25,
            tasks: vec![("sphere".into(), 10), ("rosenbrock".into(), 10), ("mlp-sine".into(), 33)],
            seeds: 3,
            pop_size: 16,
            generations: 50,
            sigma_init: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    pub population: usize,
    pub tasks: usize,
    pub generations: usize,
    pub inner_pop: usize,
    pub inner_generations: usize,
    pub objective: MetaObjective,
    pub mean_decay: f64,
    pub seed: u64,
    pub family: TaskFamily,
    pub lga: LgaConfig,
    pub init: MeanInit,
    pub lr: Schedule,
    pub sigma: Schedule,
    pub eval: EvalConfig,
    /// Checkpoint every this many generations; `0` writes only the final one.
    pub checkpoint_interval: usize,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            population: 512,
            tasks: 256,
            generations: 750,
            inner_pop: 16,
            inner_generations: 50,
            objective: MetaObjective::MinNFinalT,
            mean_decay: 0.0,
            seed: 0,
            family: TaskFamily::large(),
            lga: LgaConfig::default(),
            init: MeanInit::Normal { std: DEFAULT_INIT_STD },
            lr: Schedule::learning_rate(),
            sigma: Schedule::sigma(),
            eval: EvalConfig::default(),
            checkpoint_interval: 50,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.population % 2 != 0 {
            return Err(Error::InvalidConfig("meta population must be even and positive".into()));
        }
        if self.tasks == 0 || self.inner_pop == 0 {
            return Err(Error::InvalidConfig("need at least one task and one inner member".into()));
        }
        if self.inner_generations == 0 {
            return Err(Error::InvalidConfig("inner loop needs at least one generation".into()));
        }
        self.family.validate()?;
        self.lga.validate()?;
        self.lr.validate("learning-rate")?;
        self.sigma.validate("sigma")?;
        if let MeanInit::Normal { std } = self.init {
            if !(std >= 0.0 && std.is_finite()) {
                return Err(Error::InvalidConfig("init std must be finite and non-negative".into()));
            }
        }
        for (id, dim) in &self.eval.tasks {
            Problem::from_id(id, *dim, 0, true)?;
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Result<MetaEsState> {
        let d = self.lga.num_params();
        let mean = match self.init {
            MeanInit::Zero => vec![0.0; d],
            MeanInit::Normal { std } => {
                let mut r = rng::derive(self.seed, &[stream::INIT]);
                (0..d).map(|_| std * r.sample::<f64, _>(StandardNormal)).collect()
            }
        };
        MetaEsState::new(mean, self.sigma, self.lr, self.mean_decay)
    }

    /// The shared task batch of one meta-generation.
    pub fn tasks_for(&self, generation: usize) -> Result<Vec<TaskSpec>> {
        let mut r = rng::derive(self.seed, &[stream::TASKS, generation as u64]);
        (0..self.tasks).map(|_| sample_task(&self.family, &mut r)).collect()
    }

    /// Inner-loop seed for task `j` of a meta-generation.
    pub fn inner_seed(&self, generation: usize, task: usize) -> u64 {
        rng::derive_seed(self.seed, &[stream::INNER, generation as u64, task as u64])
    }
}

/// Scores `M` candidates on `J` tasks. Entry `(i, j)` depends only on the
/// candidate, the task and the generation.
pub fn score_candidates(
    config: &MetaConfig,
    generation: usize,
    thetas: &[Vec<f64>],
    tasks: &[TaskSpec],
) -> Result<Matrix> {
    let params = thetas.iter().map(|t| LgaParams::from_flat(config.lga, t)).collect::<Result<Vec<_>>>()?;
    let j = tasks.len();
    let scores: Vec<f64> = (0..params.len() * j)
        .into_par_iter()
        .map(|k| {
            let (i, t) = (k / j, k % j);
            inner_score(
                &params[i],
                &tasks[t],
                config.inner_pop,
                config.inner_generations,
                config.objective,
                config.inner_seed(generation, t),
            )
        })
        .collect();
    Ok(Matrix::from_vec_unchecked(params.len(), j, scores))
}

/// Mean final best-so-far of `params` over the evaluation seeds of one task.
pub fn evaluate_mean(params: &LgaParams, config: &MetaConfig, task_index: usize) -> Result<f64> {
    let (id, dim) = &config.eval.tasks[task_index];
    let e = &config.eval;
    let runs: Vec<f64> = (0..e.seeds)
        .into_par_iter()
        .map(|s| {
            let seed = rng::derive_seed(config.seed, &[stream::EVAL, task_index as u64, s as u64]);
            let problem = Problem::from_id(id, *dim, seed, true)?;
            let ga = GaConfig::lga(e.pop_size, e.sigma_init, e.generations).with_seed(seed);
            Ok(run(&ga, Some(params), &problem).map_or(f64::NAN, |t| t.final_best()))
        })
        .collect::<Result<_>>()?;
    Ok(runs.iter().sum::<f64>() / runs.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaLogRow {
    pub generation: usize,
    pub mean_fitness: f64,
    pub median_fitness: f64,
    pub best_fitness: f64,
    /// Median over tasks of the per-task mean raw score.
    pub median_raw_score: f64,
    pub sigma: f64,
    pub lr: f64,
    /// One entry per evaluation task, present on evaluation generations.
    pub eval: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MetaOutcome {
    pub params: LgaParams,
    pub state: MetaEsState,
    pub log: Vec<MetaLogRow>,
}

/// Writes the meta-log as CSV with one `eval_<task>_<dim>` column per evaluation task.
pub fn write_meta_log<W: Write>(writer: W, eval_tasks: &[(String, usize)], log: &[MetaLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> =
        ["generation", "mean_fitness", "median_fitness", "best_fitness", "median_raw_score", "sigma", "lr"]
            .map(String::from)
            .to_vec();
    header.extend(eval_tasks.iter().map(|(id, d)| format!("eval_{id}_{d}")));
    w.write_record(&header)?;
    for r in log {
        let mut row = vec![
            r.generation.to_string(),
            r.mean_fitness.to_string(),
            r.median_fitness.to_string(),
            r.best_fitness.to_string(),
            r.median_raw_score.to_string(),
            r.sigma.to_string(),
            r.lr.to_string(),
        ];
        match &r.eval {
            Some(v) => row.extend(v.iter().map(f64::to_string)),
            None => row.extend(eval_tasks.iter().map(|_| String::new())),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the full outer loop on a pool of `workers` threads. With `out_dir`
/// set, writes `meta_log.csv`, periodic `checkpoint_<gen>.json` files and
/// `checkpoint_final.json` holding the final meta-mean.
pub fn meta_train(config: &MetaConfig, workers: usize, out_dir: Option<&Path>) -> Result<MetaOutcome> {
    meta_train_with(config, workers, out_dir, |_| {})
}

/// [`meta_train`] with a callback invoked after every generation's log row.
pub fn meta_train_with(
    config: &MetaConfig,
    workers: usize,
    out_dir: Option<&Path>,
    mut on_generation: impl FnMut(&MetaLogRow),
) -> Result<MetaOutcome> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let mut state = config.initial_state()?;
    let mut log = Vec::with_capacity(config.generations);

    for g in 0..config.generations {
        let eval = if config.eval.interval > 0 && g % config.eval.interval == 0 && !config.eval.tasks.is_empty() {
            let mu = LgaParams::from_flat(config.lga, &state.mean)?;
            Some(pool.install(|| {
                (0..config.eval.tasks.len()).map(|k| evaluate_mean(&mu, config, k)).collect::<Result<Vec<_>>>()
            })?)
        } else {
            None
        };

        let mut ask_rng = rng::derive(config.seed, &[stream::META_ASK, g as u64]);
        let candidates = meta_ask(&state, config.population, &mut ask_rng)?;
        let tasks = config.tasks_for(g)?;
        let scores = pool.install(|| score_candidates(config, g, &candidates.thetas, &tasks))?;
        let fitness = meta_fitness(&scores)?;

        let task_means: Vec<f64> = (0..scores.cols())
            .map(|c| {
                let col: Vec<f64> = scores.column(c).into_iter().filter(|v| v.is_finite()).collect();
                col.iter().sum::<f64>() / col.len().max(1) as f64
            })
            .collect();
        let row = MetaLogRow {
            generation: g,
            mean_fitness: fitness.iter().sum::<f64>() / fitness.len() as f64,
            median_fitness: median(&fitness),
            best_fitness: fitness.iter().copied().fold(f64::INFINITY, f64::min),
            median_raw_score: median(&task_means),
            sigma: state.sigma,
            lr: state.lr,
            eval,
        };
        on_generation(&row);
        log.push(row);

        meta_tell(&mut state, &candidates, &fitness)?;

        if let Some(dir) = out_dir {
            let done = g + 1;
            if config.checkpoint_interval > 0 && done % config.checkpoint_interval == 0 {
                LgaParams::from_flat(config.lga, &state.mean)?.save(dir.join(format!("checkpoint_{done}.json")))?;
            }
        }
    }

    let params = LgaParams::from_flat(config.lga, &state.mean)?;
    if let Some(dir) = out_dir {
        params.save(dir.join("checkpoint_final.json"))?;
        write_meta_log(fs::File::create(dir.join("meta_log.csv"))?, &config.eval.tasks, &log)?;
    }
    Ok(MetaOutcome { params, state, log })
}
