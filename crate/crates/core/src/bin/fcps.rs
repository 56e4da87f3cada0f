use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use fcps::algorithms::Algorithm;
use fcps::harness::{self, ExperimentConfig, RUN_JSON};
use fcps::sim::EnvKind;
use fcps::{Error, Result};

#[derive(Parser)]
#[command(name = "fcps", version, about = "Contextual policy search with factored contexts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one learner over the configured seeds.
    Run(Common),
    /// Compare every configured algorithm over the configured seeds.
    Study {
        #[command(flatten)]
        common: Common,
        /// Train on two quadrants only and report seen vs unseen rewards.
        #[arg(long)]
        generalization: bool,
    },
    /// Re-run a previous output and check it reproduces exactly.
    Replay {
        /// A `run.json` written by `run` or `study`.
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Defaults to the toy cannon with BO-FCPS.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Algorithm tag, overriding the config.
    #[arg(long)]
    algo: Option<Algorithm>,
    #[arg(long)]
    episodes: Option<usize>,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_json(&std::fs::read_to_string(p)?)?,
        None => ExperimentConfig::new(EnvKind::Cannon, Algorithm::Bofcps),
    };
    if let Some(a) = common.algo {
        cfg.learner.algorithm = a;
        cfg.algorithms = vec![a];
    }
    if let Some(s) = common.seed {
        cfg.seeds = vec![s];
    }
    if common.episodes.is_some() {
        cfg.episodes = common.episodes;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn finish(cfg: &ExperimentConfig, results: &[harness::RunResult], out: &Path) -> Result<serde_json::Value> {
    harness::emit(cfg, results, out)?;
    let secs: f64 = results.iter().map(|r| r.wall_clock_secs).sum();
    let failed = results.iter().filter(|r| !r.completed()).count();
    Ok(json!({"status": "ok", "runs": results.len(), "failed_runs": failed, "out": out, "compute_secs": secs}))
}

fn execute(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::Run(common) => {
            let cfg = load(&common)?;
            let results = harness::run(&cfg)?;
            finish(&cfg, &results, &common.out)
        }
        Command::Study { common, generalization } => {
            let cfg = load(&common)?;
            if generalization {
                let report = harness::generalization_study(&cfg)?;
                let mut summary = finish(&cfg, &report.runs, &common.out)?;
                std::fs::write(common.out.join("generalization.json"), serde_json::to_string_pretty(&report.groups)?)?;
                summary["generalization"] = serde_json::to_value(&report.groups)?;
                Ok(summary)
            } else {
                let results = if cfg.environment == EnvKind::ActiveCannon {
                    harness::active_study(&cfg)?
                } else {
                    harness::study(&cfg)?
                };
                finish(&cfg, &results, &common.out)
            }
        }
        Command::Replay { config } => {
            let path = if config.is_dir() { config.join(RUN_JSON) } else { config };
            let file = harness::read_run_file(&path)?;
            let mut mismatches = Vec::new();
            for old in &file.results {
                let new = harness::run_single(&file.config, old.algorithm, old.seed)?;
                if &new != old {
                    mismatches.push(json!({"algorithm": old.algorithm, "seed": old.seed}));
                }
            }
            if mismatches.is_empty() {
                Ok(json!({"status": "ok", "replayed": file.results.len()}))
            } else {
                Err(Error::Numerical(format!("replay differs for {}", serde_json::to_string(&mismatches)?)))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            println!("{}", json!({"status": "error", "kind": e.kind(), "message": e.to_string()}));
            ExitCode::FAILURE
        }
    }
}
