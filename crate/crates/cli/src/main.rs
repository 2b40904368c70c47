use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use lga::harness::{self, ExperimentConfig, FileConfig};
use lga::meta;
use lga::LgaParams;

#[derive(Parser)]
#[command(name = "lga", version, about = "Meta-train and benchmark learned genetic algorithms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve operator weights on sampled benchmark tasks.
    MetaTrain(Common),
    /// Compare algorithms on benchmark tasks, normalized by the Gaussian GA.
    Evaluate(Common),
    /// Grid over elite ratio and initial mutation rate.
    Sweep(Common),
    /// Swap learned selection and mutation-rate operators into a plain GA.
    Transfer(Common),
    /// Dump selection matrices and mutation-rate factors of a learned GA run.
    Analyze(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Learned-operator checkpoint; overrides the file.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

impl Common {
    fn file(&self) -> Result<FileConfig> {
        match &self.config {
            Some(p) => FileConfig::load(p).with_context(|| format!("reading {}", p.display())),
            None => Ok(FileConfig::default()),
        }
    }

    fn seed(&self, file: &FileConfig) -> u64 {
        self.seed.or(file.seed).unwrap_or(0)
    }

    fn experiment(&self, section: Option<ExperimentConfig>, file: &FileConfig) -> ExperimentConfig {
        let mut c = section.unwrap_or_default();
        if let Some(s) = self.seed.or(file.seed) {
            c.seed = s;
        }
        if let Some(p) = &self.checkpoint {
            c.checkpoint = Some(p.clone());
        }
        c
    }
}

fn load_checkpoint(config: &ExperimentConfig) -> Result<Option<LgaParams>> {
    config
        .load_params()
        .with_context(|| format!("loading checkpoint {:?}", config.checkpoint.as_deref().unwrap_or(Path::new(""))))
}

fn require_checkpoint(config: &ExperimentConfig) -> Result<LgaParams> {
    load_checkpoint(config)?.context("this mode needs --checkpoint or `checkpoint` in the config")
}

fn create(dir: &Path, name: &str) -> Result<File> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    File::create(&path).with_context(|| format!("creating {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::MetaTrain(a) => {
            let file = a.file()?;
            let config = file.meta_train.to_config(a.seed(&file))?;
            let outcome = meta::meta_train_with(&config, a.workers, Some(&a.out), |row| {
                eprintln!(
                    "gen {:>4}  median fitness {:+.4}  sigma {:.4}  lr {:.4}",
                    row.generation, row.median_fitness, row.sigma, row.lr
                );
            })?;
            println!(
                "wrote {} ({} generations, {} parameters)",
                a.out.join("checkpoint_final.json").display(),
                outcome.log.len(),
                outcome.params.num_params()
            );
        }
        Command::Evaluate(a) => {
            let file = a.file()?;
            let config = a.experiment(file.evaluate.clone(), &file);
            let params = load_checkpoint(&config)?;
            let result = harness::evaluate(&config, params.as_ref(), a.workers)?;
            harness::write_evaluate_outputs(&a.out, &result)?;
            for s in &result.summary {
                println!(
                    "{:<20} {:>3}  {:<8}  mean {:.6e}  normalized {:.4}",
                    s.task, s.dim, s.algo, s.mean_best, s.normalized
                );
            }
        }
        Command::Sweep(a) => {
            let file = a.file()?;
            let config = a.experiment(file.sweep.clone(), &file);
            let params = load_checkpoint(&config)?;
            let rows = harness::sweep(&config, params.as_ref(), a.workers)?;
            harness::write_sweep_csv(create(&a.out, "sweep.csv")?, &rows)?;
            println!("wrote {} rows to {}", rows.len(), a.out.join("sweep.csv").display());
        }
        Command::Transfer(a) => {
            let file = a.file()?;
            let config = a.experiment(file.transfer.clone(), &file);
            let params = require_checkpoint(&config)?;
            let rows = harness::transfer(&config, &params, a.workers)?;
            harness::write_transfer_csv(create(&a.out, "transfer.csv")?, &rows)?;
            println!("wrote {} rows to {}", rows.len(), a.out.join("transfer.csv").display());
        }
        Command::Analyze(a) => {
            let file = a.file()?;
            let config = a.experiment(file.analyze.clone(), &file);
            let params = require_checkpoint(&config)?;
            let result = harness::analyze(&config, &params)?;
            harness::write_selection_csv(create(&a.out, "selection.csv")?, &result.selection)?;
            harness::write_mra_csv(create(&a.out, "mra.csv")?, &result.mra)?;
            println!(
                "wrote {} selection rows and {} mutation-rate rows to {}",
                result.selection.len(),
                result.mra.len(),
                a.out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
