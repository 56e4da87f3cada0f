use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::RunResult;
use crate::algorithms::Algorithm;
use crate::error::Result;

pub const RUN_JSON: &str = "run.json";
pub const LONG_CSV: &str = "episodes.csv";
pub const SUMMARY_CSV: &str = "summary.csv";

/// Everything written to `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    pub config: ExperimentConfig,
    pub results: Vec<RunResult>,
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `episode,seed,algorithm,online_reward,offline_reward_or_blank`, one row
/// per episode of every run.
pub fn long_csv(results: &[RunResult]) -> String {
    let mut out = String::from("episode,seed,algorithm,online_reward,offline_reward_or_blank\n");
    for r in results {
        let offline: BTreeMap<usize, f64> = r.offline.iter().map(|p| (p.episode, p.mean_reward)).collect();
        for (i, reward) in r.online_rewards.iter().enumerate() {
            let ep = i + 1;
            let off = offline.get(&ep).map(|v| v.to_string()).unwrap_or_default();
            writeln!(out, "{ep},{},{},{reward},{off}", r.seed, r.algorithm).expect("writing to a String");
        }
    }
    out
}

/// Per algorithm and evaluation episode: mean and standard deviation across
/// seeds of the offline reward and of the cumulative online reward.
pub fn summary_csv(results: &[RunResult]) -> String {
    let mut table: BTreeMap<(Algorithm, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in results {
        for p in &r.offline {
            let cum: f64 = r.online_rewards.iter().take(p.episode).sum();
            let e = table.entry((r.algorithm, p.episode)).or_default();
            e.0.push(p.mean_reward);
            e.1.push(cum);
        }
    }
    let mut out = String::from(
        "algorithm,episode,runs,offline_mean,offline_std,cumulative_online_mean,cumulative_online_std\n",
    );
    for ((a, ep), (off, cum)) in &table {
        let (om, os) = mean_std(off);
        let (cm, cs) = mean_std(cum);
        writeln!(out, "{a},{ep},{},{om},{os},{cm},{cs}", off.len()).expect("writing to a String");
    }
    out
}

/// Write `run.json`, the long CSV and the summary CSV into `dir`.
pub fn emit(config: &ExperimentConfig, results: &[RunResult], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let file = RunFile { config: config.clone(), results: results.to_vec() };
    fs::write(dir.join(RUN_JSON), serde_json::to_string_pretty(&file)? + "\n")?;
    fs::write(dir.join(LONG_CSV), long_csv(results))?;
    fs::write(dir.join(SUMMARY_CSV), summary_csv(results))?;
    Ok(())
}

pub fn read_run_file(path: &Path) -> Result<RunFile> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
