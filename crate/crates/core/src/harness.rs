//! Experiment runners behind the command-line front end: benchmark
//! evaluation, hyperparameter sweeps, operator transfer and selection dumps.
//!
//! Every run's seed depends only on the master seed and the task and
//! repetition indices, and rows are emitted in configuration order, so
//! tables are identical for any number of workers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bbob::{BbobFunction, TaskFamily};
use crate::engine::{run, GaConfig, MraSlot, SelectionSlot, Trajectory};
use crate::error::{Error, Result};
use crate::meta::{MeanInit, MetaConfig, MetaObjective};
use crate::operators::LgaParams;
use crate::problem::Problem;
use crate::rng::{self, stream};

/// Denominator guard for normalized scores.
pub const NORMALIZE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Lga,
    Gaussian,
    Mr15,
    Samr,
    Gesmr,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Self::Lga, Self::Gaussian, Self::Mr15, Self::Samr, Self::Gesmr];

    pub fn id(self) -> &'static str {
        match self {
            Self::Lga => "lga",
            Self::Gaussian => "gaussian",
            Self::Mr15 => "mr15",
            Self::Samr => "samr",
            Self::Gesmr => "gesmr",
        }
    }

    /// Engine configuration for this algorithm.
    pub fn ga_config(self, pop_size: usize, elite_ratio: f64, sigma_init: f64, generations: usize) -> GaConfig {
        let base = GaConfig::gaussian(pop_size, elite_ratio, sigma_init, generations);
        match self {
            Self::Lga => GaConfig { selection: SelectionSlot::Learned, mra: MraSlot::Learned, ..base },
            Self::Gaussian => base,
            Self::Mr15 => GaConfig { mra: MraSlot::OneFifth, ..base },
            Self::Samr => GaConfig { mra: MraSlot::samr(), ..base },
            Self::Gesmr => GaConfig { mra: MraSlot::gesmr(), ..base },
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.id() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}

/// Settings shared by the evaluate, sweep, transfer and analyze modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithms: Vec<Algorithm>,
    /// Task ids, optionally suffixed with `:dim` to override `dim`.
    pub tasks: Vec<String>,
    pub pop_size: usize,
    pub dim: usize,
    pub generations: usize,
    pub elite_ratio: f64,
    pub sigma_init: f64,
    /// Elite ratio used by the learned GA.
    pub lga_elite_ratio: f64,
    pub repetitions: usize,
    pub seed: u64,
    /// Place each task's optimum at a seeded offset instead of the origin.
    pub random_offset: bool,
    /// Pick the baseline's `(ρ, σ₀)` from the grids on separate tuning seeds.
    pub tune_gaussian: bool,
    pub rho_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithms: vec![Algorithm::Gaussian],
            tasks: vec!["sphere".into()],
            pop_size: 32,
            dim: 20,
            generations: 50,
            elite_ratio: 0.5,
            sigma_init: 0.25,
            lga_elite_ratio: 1.0,
            repetitions: 5,
            seed: 0,
            random_offset: true,
            tune_gaussian: false,
            rho_grid: vec![0.0, 0.15, 0.25, 0.35, 0.5, 1.0],
            sigma_grid: vec![0.1, 0.25, 0.5, 0.75, 1.0],
            checkpoint: None,
        }
    }
}

/// A task id resolved to a dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskRef {
    pub id: String,
    pub dim: usize,
}

impl TaskRef {
    pub fn parse(text: &str, default_dim: usize) -> Result<Self> {
        let (id, dim) = match text.split_once(':') {
            Some((id, d)) => (id, d.parse().map_err(|_| Error::InvalidConfig(format!("bad dimension in `{text}`")))?),
            None => (text, default_dim),
        };
        Problem::from_id(id, dim.max(1), 0, false)?;
        Ok(Self { id: id.to_string(), dim })
    }

    /// Dimension label; the network task has a fixed size.
    pub fn effective_dim(&self) -> usize {
        Problem::from_id(&self.id, self.dim, 0, false).map_or(self.dim, |p| crate::problem::Objective::dim(&p))
    }

    pub fn instance(&self, seed: u64, offset: bool) -> Result<Problem> {
        Problem::from_id(&self.id, self.dim, seed, offset)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() || self.algorithms.is_empty() {
            return Err(Error::InvalidConfig("need at least one task and one algorithm".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be at least 1".into()));
        }
        self.task_refs()?;
        for a in &self.algorithms {
            a.ga_config(self.pop_size, self.elite_ratio, self.sigma_init, self.generations).validate()?;
        }
        Ok(())
    }

    pub fn task_refs(&self) -> Result<Vec<TaskRef>> {
        self.tasks.iter().map(|t| TaskRef::parse(t, self.dim)).collect()
    }

    /// Seed shared by every algorithm for repetition `rep` of task `task`.
    pub fn run_seed(&self, task: usize, rep: usize) -> u64 {
        rng::derive_seed(self.seed, &[stream::EVAL, task as u64, rep as u64])
    }

    fn tune_seed(&self, task: usize, rep: usize) -> u64 {
        rng::derive_seed(self.seed, &[stream::TUNE, task as u64, rep as u64])
    }

    pub fn load_params(&self) -> Result<Option<LgaParams>> {
        self.checkpoint.as_ref().map(LgaParams::load).transpose()
    }
}

fn require_params<'a>(params: Option<&'a LgaParams>, needed: bool) -> Result<Option<&'a LgaParams>> {
    match (needed, params) {
        (true, None) => Err(Error::InvalidConfig("algorithm `lga` needs a checkpoint".into())),
        (_, p) => Ok(p),
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

fn run_one(problem: &Problem, config: &GaConfig, params: Option<&LgaParams>) -> Result<Trajectory> {
    run(config, params.filter(|_| config.needs_params()), problem)
}

/// Grid-searches the baseline's `(ρ, σ₀)` on one task by mean final
/// best-so-far over tuning seeds. Ties keep the earlier grid point.
pub fn tune_gaussian(config: &ExperimentConfig, task_index: usize, task: &TaskRef) -> Result<(f64, f64)> {
    if config.rho_grid.is_empty() || config.sigma_grid.is_empty() {
        return Err(Error::InvalidConfig("tuning grids must be non-empty".into()));
    }
    let grid: Vec<(f64, f64)> =
        config.rho_grid.iter().flat_map(|&r| config.sigma_grid.iter().map(move |&s| (r, s))).collect();
    let scores = grid
        .par_iter()
        .map(|&(rho, sigma)| {
            let mut total = 0.0;
            for rep in 0..config.repetitions {
                let seed = config.tune_seed(task_index, rep);
                let problem = task.instance(seed, config.random_offset)?;
                let ga = Algorithm::Gaussian.ga_config(config.pop_size, rho, sigma, config.generations).with_seed(seed);
                total += run_one(&problem, &ga, None)?.final_best();
            }
            Ok(total / config.repetitions as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let best = (0..grid.len()).fold(0, |b, i| if scores[i] < scores[b] { i } else { b });
    Ok(grid[best])
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateRow {
    pub task: String,
    pub dim: usize,
    pub algo: Algorithm,
    pub seed: u64,
    pub initial_best: f64,
    pub best_final: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub task: String,
    pub dim: usize,
    pub algo: Algorithm,
    pub mean_best: f64,
    pub normalized: f64,
    pub elite_ratio: f64,
    pub sigma_init: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvaluateResult {
    pub rows: Vec<EvaluateRow>,
    pub summary: Vec<SummaryRow>,
}

/// Runs every `(task, algorithm, repetition)` and normalizes by the seed-averaged
/// baseline on the same task. The baseline always runs, listed or not.
pub fn evaluate(config: &ExperimentConfig, params: Option<&LgaParams>, workers: usize) -> Result<EvaluateResult> {
    config.validate()?;
    require_params(params, config.algorithms.contains(&Algorithm::Lga))?;
    let tasks = config.task_refs()?;
    let mut algos = config.algorithms.clone();
    if !algos.contains(&Algorithm::Gaussian) {
        algos.insert(0, Algorithm::Gaussian);
    }
    pool(workers)?.install(|| {
        let mut out = EvaluateResult::default();
        for (ti, task) in tasks.iter().enumerate() {
            let (g_rho, g_sigma) = if config.tune_gaussian {
                tune_gaussian(config, ti, task)?
            } else {
                (config.elite_ratio, config.sigma_init)
            };
            let settings = |a: Algorithm| match a {
                Algorithm::Gaussian => (g_rho, g_sigma),
                Algorithm::Lga => (config.lga_elite_ratio, config.sigma_init),
                _ => (config.elite_ratio, config.sigma_init),
            };
            let jobs: Vec<(Algorithm, usize)> =
                algos.iter().flat_map(|&a| (0..config.repetitions).map(move |r| (a, r))).collect();
            let results = jobs
                .par_iter()
                .map(|&(a, rep)| {
                    let seed = config.run_seed(ti, rep);
                    let problem = task.instance(seed, config.random_offset)?;
                    let (rho, sigma) = settings(a);
                    let ga = a.ga_config(config.pop_size, rho, sigma, config.generations).with_seed(seed);
                    let t = run_one(&problem, &ga, params)?;
                    Ok((a, seed, t.initial_best(), t.final_best()))
                })
                .collect::<Result<Vec<_>>>()?;

            let mean_of = |a: Algorithm| {
                let v: Vec<f64> = results.iter().filter(|r| r.0 == a).map(|r| r.3).collect();
                v.iter().sum::<f64>() / v.len() as f64
            };
            let denom = mean_of(Algorithm::Gaussian).max(NORMALIZE_FLOOR);
            let dim = task.effective_dim();
            for &(a, seed, initial_best, best_final) in &results {
                out.rows.push(EvaluateRow {
                    task: task.id.clone(),
                    dim,
                    algo: a,
                    seed,
                    initial_best,
                    best_final,
                    normalized: best_final / denom,
                });
            }
            for &a in &algos {
                let mean_best = mean_of(a);
                let (elite_ratio, sigma_init) = settings(a);
                out.summary.push(SummaryRow {
                    task: task.id.clone(),
                    dim,
                    algo: a,
                    mean_best,
                    // Both sides floored so the baseline scores exactly 1.
                    normalized: mean_best.max(NORMALIZE_FLOOR) / denom,
                    elite_ratio,
                    sigma_init,
                });
            }
        }
        Ok(out)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub task: String,
    pub dim: usize,
    pub algo: Algorithm,
    pub elite_ratio: f64,
    pub elite_count: usize,
    pub sigma_init: f64,
    pub seed: u64,
    pub best_final: f64,
}

/// Full `(ρ, σ₀)` grid per algorithm and task with `repetitions` seeds each.
pub fn sweep(config: &ExperimentConfig, params: Option<&LgaParams>, workers: usize) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if config.rho_grid.is_empty() || config.sigma_grid.is_empty() {
        return Err(Error::InvalidConfig("sweep grids must be non-empty".into()));
    }
    require_params(params, config.algorithms.contains(&Algorithm::Lga))?;
    let tasks = config.task_refs()?;
    let mut jobs = Vec::new();
    for (ti, task) in tasks.iter().enumerate() {
        for &a in &config.algorithms {
            for &rho in &config.rho_grid {
                for &sigma in &config.sigma_grid {
                    for rep in 0..config.repetitions {
                        jobs.push((ti, task, a, rho, sigma, rep));
                    }
                }
            }
        }
    }
    pool(workers)?.install(|| {
        jobs.par_iter()
            .map(|&(ti, task, a, rho, sigma, rep)| {
                let seed = config.run_seed(ti, rep);
                let problem = task.instance(seed, config.random_offset)?;
                let ga = a.ga_config(config.pop_size, rho, sigma, config.generations).with_seed(seed);
                ga.validate()?;
                let t = run_one(&problem, &ga, params)?;
                Ok(SweepRow {
                    task: task.id.clone(),
                    dim: task.effective_dim(),
                    algo: a,
                    elite_ratio: rho,
                    elite_count: ga.elite_count(),
                    sigma_init: sigma,
                    seed,
                    best_final: t.final_best(),
                })
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferRow {
    pub task: String,
    pub dim: usize,
    pub selection: SelectionSlot,
    pub mra: MraSlot,
    pub seed: u64,
    pub best_final: f64,
    /// Relative to the seed-averaged truncation + fixed-rate result.
    pub normalized: f64,
}

pub const TRANSFER_COMPOSITIONS: [(SelectionSlot, MraSlot); 4] = [
    (SelectionSlot::Truncation, MraSlot::Fixed),
    (SelectionSlot::Truncation, MraSlot::Learned),
    (SelectionSlot::Learned, MraSlot::Fixed),
    (SelectionSlot::Learned, MraSlot::Learned),
];

/// Swaps learned operators into an otherwise plain GA.
pub fn transfer(config: &ExperimentConfig, params: &LgaParams, workers: usize) -> Result<Vec<TransferRow>> {
    config.validate()?;
    let tasks = config.task_refs()?;
    pool(workers)?.install(|| {
        let mut rows = Vec::new();
        for (ti, task) in tasks.iter().enumerate() {
            let jobs: Vec<(usize, usize)> =
                (0..TRANSFER_COMPOSITIONS.len()).flat_map(|c| (0..config.repetitions).map(move |r| (c, r))).collect();
            let results = jobs
                .par_iter()
                .map(|&(c, rep)| {
                    let (selection, mra) = TRANSFER_COMPOSITIONS[c];
                    let seed = config.run_seed(ti, rep);
                    let problem = task.instance(seed, config.random_offset)?;
                    let ga = GaConfig {
                        selection,
                        mra,
                        ..GaConfig::gaussian(config.pop_size, config.elite_ratio, config.sigma_init, config.generations)
                    }
                    .with_seed(seed);
                    Ok((c, seed, run_one(&problem, &ga, Some(params))?.final_best()))
                })
                .collect::<Result<Vec<_>>>()?;
            let base: Vec<f64> = results.iter().filter(|r| r.0 == 0).map(|r| r.2).collect();
            let denom = (base.iter().sum::<f64>() / base.len() as f64).max(NORMALIZE_FLOOR);
            let dim = task.effective_dim();
            rows.extend(results.into_iter().map(|(c, seed, best_final)| TransferRow {
                task: task.id.clone(),
                dim,
                selection: TRANSFER_COMPOSITIONS[c].0,
                mra: TRANSFER_COMPOSITIONS[c].1,
                seed,
                best_final,
                normalized: best_final / denom,
            }));
        }
        Ok(rows)
    })
}

/// One `(generation, parent, column)` entry of a selection matrix. Column
/// `n_children` is the keep-parent slot and carries no child features.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionDumpRow {
    pub generation: usize,
    pub parent: usize,
    pub child: usize,
    pub keep: bool,
    pub child_z: Option<f64>,
    pub child_rank: Option<f64>,
    pub child_flag: Option<f64>,
    pub logit: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MraDumpRow {
    pub generation: usize,
    pub child: usize,
    pub parent: usize,
    pub delta_sigma: f64,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalyzeResult {
    pub selection: Vec<SelectionDumpRow>,
    pub mra: Vec<MraDumpRow>,
}

/// Debug run of the learned GA on the first task with the first repetition's seed.
pub fn analyze(config: &ExperimentConfig, params: &LgaParams) -> Result<AnalyzeResult> {
    config.validate()?;
    let task = &config.task_refs()?[0];
    let seed = config.run_seed(0, 0);
    let problem = task.instance(seed, config.random_offset)?;
    let mut ga =
        Algorithm::Lga.ga_config(config.pop_size, config.lga_elite_ratio, config.sigma_init, config.generations);
    ga.seed = seed;
    ga.debug = true;
    let t = run_one(&problem, &ga, Some(params))?;
    let mut out = AnalyzeResult::default();
    for (rec, gen) in t.debug.iter().zip(&t.records) {
        if let (Some(cf), Some(logits), Some(probs)) = (&rec.child_features, &rec.logits, &rec.probs) {
            let n = cf.rows();
            for p in 0..logits.rows() {
                for c in 0..=n {
                    let keep = c == n;
                    out.selection.push(SelectionDumpRow {
                        generation: rec.generation,
                        parent: p,
                        child: c,
                        keep,
                        child_z: (!keep).then(|| cf[(c, crate::features::COL_Z)]),
                        child_rank: (!keep).then(|| cf[(c, crate::features::COL_RANK)]),
                        child_flag: (!keep).then(|| cf[(c, crate::features::COL_FLAG)]),
                        logit: logits[(p, c)],
                        prob: probs[(p, c)],
                    });
                }
            }
        }
        if let Some(delta) = &rec.delta_sigma {
            for (c, d) in delta.iter().enumerate() {
                out.mra.push(MraDumpRow {
                    generation: rec.generation,
                    child: c,
                    parent: rec.sampled[c],
                    delta_sigma: *d,
                    fitness: gen.fitness[c],
                });
            }
        }
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_evaluate_csv<W: Write>(w: W, rows: &[EvaluateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["task", "dim", "algo", "seed", "initial_best", "best_final", "normalized"])?;
    for r in rows {
        w.write_record([
            r.task.clone(),
            r.dim.to_string(),
            r.algo.to_string(),
            r.seed.to_string(),
            r.initial_best.to_string(),
            r.best_final.to_string(),
            r.normalized.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["task", "dim", "algo", "elite_ratio", "sigma_init", "mean_best", "normalized"])?;
    for r in rows {
        w.write_record([
            r.task.clone(),
            r.dim.to_string(),
            r.algo.to_string(),
            r.elite_ratio.to_string(),
            r.sigma_init.to_string(),
            r.mean_best.to_string(),
            r.normalized.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["task", "dim", "algo", "elite_ratio", "elite_count", "sigma_init", "seed", "best_final"])?;
    for r in rows {
        w.write_record([
            r.task.clone(),
            r.dim.to_string(),
            r.algo.to_string(),
            r.elite_ratio.to_string(),
            r.elite_count.to_string(),
            r.sigma_init.to_string(),
            r.seed.to_string(),
            r.best_final.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn slot_id<T: Serialize>(slot: &T) -> String {
    match serde_json::to_value(slot) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(serde_json::Value::Object(m)) => m.keys().next().cloned().unwrap_or_default(),
        _ => String::new(),
    }
}

pub fn write_transfer_csv<W: Write>(w: W, rows: &[TransferRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["task", "dim", "selection", "mra", "seed", "best_final", "normalized"])?;
    for r in rows {
        w.write_record([
            r.task.clone(),
            r.dim.to_string(),
            slot_id(&r.selection),
            slot_id(&r.mra),
            r.seed.to_string(),
            r.best_final.to_string(),
            r.normalized.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_selection_csv<W: Write>(w: W, rows: &[SelectionDumpRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["generation", "parent", "child", "keep", "child_z", "child_rank", "child_flag", "logit", "prob"])?;
    for r in rows {
        w.write_record([
            r.generation.to_string(),
            r.parent.to_string(),
            r.child.to_string(),
            u8::from(r.keep).to_string(),
            opt(r.child_z),
            opt(r.child_rank),
            opt(r.child_flag),
            r.logit.to_string(),
            r.prob.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mra_csv<W: Write>(w: W, rows: &[MraDumpRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["generation", "child", "parent", "delta_sigma", "fitness"])?;
    for r in rows {
        w.write_record([
            r.generation.to_string(),
            r.child.to_string(),
            r.parent.to_string(),
            r.delta_sigma.to_string(),
            r.fitness.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Meta-training section of a configuration file. Absent keys keep the
/// library defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaTrainSection {
    pub population: Option<usize>,
    pub tasks: Option<usize>,
    pub generations: Option<usize>,
    pub inner_pop: Option<usize>,
    pub inner_generations: Option<usize>,
    pub objective: Option<String>,
    pub mean_decay: Option<f64>,
    /// `small`, `medium` or `large`.
    pub family: Option<String>,
    /// Explicit function ids; overrides `family`.
    pub functions: Option<Vec<String>>,
    pub dim_range: Option<(usize, usize)>,
    pub sigma_range: Option<(f64, f64)>,
    pub noise_prob: Option<f64>,
    pub init_std: Option<f64>,
    pub lr_init: Option<f64>,
    pub lr_decay: Option<f64>,
    pub lr_floor: Option<f64>,
    pub sigma_init: Option<f64>,
    pub sigma_decay: Option<f64>,
    pub sigma_floor: Option<f64>,
    pub eval_interval: Option<usize>,
    pub eval_tasks: Option<Vec<String>>,
    pub eval_seeds: Option<usize>,
    pub checkpoint_interval: Option<usize>,
    pub heads: Option<usize>,
    pub key_dim: Option<usize>,
}

impl MetaTrainSection {
    pub fn to_config(&self, seed: u64) -> Result<MetaConfig> {
        let mut c = MetaConfig { seed, ..MetaConfig::default() };
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set!(
            population => c.population,
            tasks => c.tasks,
            generations => c.generations,
            inner_pop => c.inner_pop,
            inner_generations => c.inner_generations,
            mean_decay => c.mean_decay,
            checkpoint_interval => c.checkpoint_interval,
            heads => c.lga.heads,
            key_dim => c.lga.d_k,
            lr_init => c.lr.init,
            lr_decay => c.lr.decay,
            lr_floor => c.lr.floor,
            sigma_init => c.sigma.init,
            sigma_decay => c.sigma.decay,
            sigma_floor => c.sigma.floor,
            eval_interval => c.eval.interval,
            eval_seeds => c.eval.seeds,
        );
        if let Some(o) = &self.objective {
            c.objective = o.parse::<MetaObjective>()?;
        }
        if let Some(f) = &self.family {
            c.family = TaskFamily::by_name(f)?;
        }
        if let Some(fs) = &self.functions {
            c.family.functions = fs.iter().map(|f| f.parse::<BbobFunction>()).collect::<Result<_>>()?;
        }
        set!(dim_range => c.family.dim_range, sigma_range => c.family.sigma_range, noise_prob => c.family.noise_prob);
        if let Some(std) = self.init_std {
            c.init = if std > 0.0 { MeanInit::Normal { std } } else { MeanInit::Zero };
        }
        if let Some(ts) = &self.eval_tasks {
            c.eval.tasks = ts.iter().map(|t| TaskRef::parse(t, 10).map(|r| (r.id, r.dim))).collect::<Result<_>>()?;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Top-level configuration file with one optional section per mode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub meta_train: MetaTrainSection,
    pub evaluate: Option<ExperimentConfig>,
    pub sweep: Option<ExperimentConfig>,
    pub transfer: Option<ExperimentConfig>,
    pub analyze: Option<ExperimentConfig>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// Writes all evaluate outputs into `dir`.
pub fn write_evaluate_outputs(dir: &Path, result: &EvaluateResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_evaluate_csv(fs::File::create(dir.join("evaluate.csv"))?, &result.rows)?;
    write_summary_csv(fs::File::create(dir.join("evaluate_summary.csv"))?, &result.summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            algorithms: vec![Algorithm::Gaussian, Algorithm::Mr15],
            tasks: vec!["sphere".into(), "rastrigin:3".into()],
            pop_size: 8,
            dim: 2,
            generations: 10,
            repetitions: 3,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn algorithm_ids_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.id().parse::<Algorithm>().unwrap(), a);
        }
        assert!("cma".parse::<Algorithm>().is_err());
    }

    #[test]
    fn task_refs_parse_dimensions() {
        assert_eq!(TaskRef::parse("sphere:7", 3).unwrap(), TaskRef { id: "sphere".into(), dim: 7 });
        assert_eq!(TaskRef::parse("sphere", 3).unwrap().dim, 3);
        assert_eq!(TaskRef::parse("mlp-sine", 3).unwrap().effective_dim(), 33);
        assert!(TaskRef::parse("sphere:x", 3).is_err());
        assert!(TaskRef::parse("bogus", 3).is_err());
    }

    #[test]
    fn baseline_normalizes_to_one() {
        let r = evaluate(&small(), None, 1).unwrap();
        assert_eq!(r.rows.len(), 2 * 2 * 3);
        for s in r.summary.iter().filter(|s| s.algo == Algorithm::Gaussian) {
            assert_eq!(s.normalized, 1.0);
        }
        for s in &r.summary {
            let rows: Vec<f64> =
                r.rows.iter().filter(|x| x.task == s.task && x.algo == s.algo).map(|x| x.best_final).collect();
            assert_eq!(s.mean_best, rows.iter().sum::<f64>() / rows.len() as f64);
        }
    }

    #[test]
    fn lga_without_checkpoint_is_rejected() {
        let c = ExperimentConfig { algorithms: vec![Algorithm::Lga], ..small() };
        assert!(evaluate(&c, None, 1).is_err());
    }

    #[test]
    fn sweep_counts_and_single_parent() {
        let c = ExperimentConfig {
            algorithms: vec![Algorithm::Gaussian],
            tasks: vec!["sphere".into()],
            repetitions: 2,
            ..small()
        };
        let rows = sweep(&c, None, 2).unwrap();
        assert_eq!(rows.len(), 6 * 5 * 2);
        assert!(rows.iter().filter(|r| r.elite_ratio == 0.0).all(|r| r.elite_count == 1));
    }

    #[test]
    fn file_config_sections() {
        let text = r#"
            seed = 4
            [meta_train]
            population = 8
            family = "small"
            dim_range = [2, 4]
            functions = ["sphere", "rastrigin"]
            eval_tasks = ["sphere:10", "mlp-sine"]
            [evaluate]
            algorithms = ["gaussian", "lga"]
            tasks = ["sphere", "schwefel:5"]
            dim = 3
        "#;
        let f = FileConfig::parse(text).unwrap();
        assert_eq!(f.seed, Some(4));
        let m = f.meta_train.to_config(4).unwrap();
        assert_eq!(m.population, 8);
        assert_eq!(m.family.functions.len(), 2);
        assert_eq!(m.family.dim_range, (2, 4));
        assert_eq!(m.eval.tasks[0], ("sphere".to_string(), 10));
        let e = f.evaluate.unwrap();
        assert_eq!(e.algorithms, vec![Algorithm::Gaussian, Algorithm::Lga]);
        assert_eq!(e.pop_size, 32);
        assert!(FileConfig::parse("[evaluate]\nbogus = 1").is_err());
    }
}
