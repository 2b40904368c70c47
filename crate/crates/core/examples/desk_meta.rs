//! Desk-scale meta-training on low-dimensional Sphere, Rosenbrock and
//! Rastrigin, followed by a comparison against a grid-tuned Gaussian GA.
//!
//! `cargo run --release -p lga-core --example desk_meta -- [generations] [out-dir] [init-std] [seed]`

use std::path::PathBuf;
use std::time::Instant;

use lga::bbob::{BbobFunction, TaskFamily};
use lga::harness::{evaluate, Algorithm, ExperimentConfig};
use lga::meta::{meta_train_with, EvalConfig, MeanInit, MetaConfig, DEFAULT_INIT_STD};

fn main() -> lga::Result<()> {
    let mut args = std::env::args().skip(1);
    let generations = args.next().and_then(|a| a.parse().ok()).unwrap_or(150);
    let out = args.next().map(PathBuf::from);
    let std: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(DEFAULT_INIT_STD);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let config = MetaConfig {
        population: 64,
        tasks: 32,
        generations,
        family: TaskFamily::new(vec![BbobFunction::Sphere, BbobFunction::Rosenbrock, BbobFunction::Rastrigin])
            .with_dims(2, 4),
        eval: EvalConfig { interval: 1, tasks: vec![("sphere".into(), 10)], ..EvalConfig::default() },
        init: if std > 0.0 { MeanInit::Normal { std } } else { MeanInit::Zero },
        seed,
        ..MetaConfig::default()
    };
    let start = Instant::now();
    let outcome = meta_train_with(&config, 1, out.as_deref(), |row| {
        eprintln!(
            "gen {:>4}  median {:+.3}  raw {:.4e}  sigma {:.4}  eval {:?}  [{:.0?}]",
            row.generation,
            row.median_fitness,
            row.median_raw_score,
            row.sigma,
            row.eval,
            start.elapsed()
        );
    })?;

    let exp = ExperimentConfig {
        algorithms: vec![Algorithm::Gaussian, Algorithm::Lga],
        tasks: vec!["sphere".into()],
        pop_size: 32,
        dim: 10,
        generations: 50,
        repetitions: 50,
        tune_gaussian: true,
        ..ExperimentConfig::default()
    };
    let result = evaluate(&exp, Some(&outcome.params), 1)?;
    for s in &result.summary {
        eprintln!("{} rho={} sigma={} mean_best={:.4e}", s.algo, s.elite_ratio, s.sigma_init, s.mean_best);
    }
    let g: Vec<f64> = result.rows.iter().filter(|r| r.algo == Algorithm::Gaussian).map(|r| r.best_final).collect();
    let l: Vec<f64> = result.rows.iter().filter(|r| r.algo == Algorithm::Lga).map(|r| r.best_final).collect();
    let wins = l.iter().zip(&g).filter(|(a, b)| a < b).count();
    eprintln!("lga wins {wins}/{}", l.len());
    Ok(())
}
