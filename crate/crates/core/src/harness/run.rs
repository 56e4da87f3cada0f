use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ContextSampler, ExperimentConfig, GridSpec};
use crate::algorithms::{Algorithm, Learner, LearnerConfig};
use crate::error::{Error, Result};
use crate::experience::Context;
use crate::sim::Environment;

/// Stable 64-bit stream seed for `(master, algorithm tag, run seed, purpose)`.
pub fn derive_seed(master: u64, tag: &str, run_seed: u64, purpose: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    eat(&master.to_le_bytes());
    eat(tag.as_bytes());
    eat(&run_seed.to_le_bytes());
    eat(purpose.as_bytes());
    // splitmix64 finalizer
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeds and world of one run, enough to replay it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayMeta {
    pub master_seed: u64,
    pub run_seed: u64,
    pub world_seed: u64,
    pub learner_seed: u64,
    /// Context draws and rollout noise; shared by all algorithms for a run seed.
    pub context_seed: u64,
    pub rollout_seed: u64,
    pub environment: Environment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflinePoint {
    /// Episodes completed when the evaluation ran.
    pub episode: usize,
    pub mean_reward: f64,
}

/// Per-context rewards of the last offline evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEval {
    pub contexts: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub kind: String,
    pub message: String,
    pub episode: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub online_rewards: Vec<f64>,
    pub offline: Vec<OfflinePoint>,
    /// Joined contexts the episodes were run at.
    pub contexts: Vec<Vec<f64>>,
    pub final_eval: Option<GridEval>,
    pub meta: ReplayMeta,
    /// Set when a component error aborted the run; the rest is partial.
    pub error: Option<RunError>,
    /// Not serialized, so outputs stay byte-reproducible.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl PartialEq for RunResult {
    /// Equality ignores wall-clock time.
    fn eq(&self, other: &Self) -> bool {
        self.algorithm == other.algorithm
            && self.seed == other.seed
            && self.online_rewards == other.online_rewards
            && self.offline == other.offline
            && self.contexts == other.contexts
            && self.final_eval == other.final_eval
            && self.meta == other.meta
            && self.error == other.error
    }
}

impl RunResult {
    pub fn completed(&self) -> bool {
        self.error.is_none()
    }
}

/// Sum of the first `t` online rewards.
pub fn cumulative_online(result: &RunResult, t: usize) -> f64 {
    result.online_rewards.iter().take(t).sum()
}

/// Greedy, noise-free evaluation on `grid`: per-context rewards. The
/// learner is only read.
pub fn offline_rewards(learner: &Learner, grid: &[Context], env: &Environment) -> Result<Vec<f64>> {
    let policy = learner.greedy()?;
    // Noise-free rollouts never draw from this stream.
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    grid.iter()
        .map(|c| {
            let theta = policy.select(c)?;
            let outcome = env.rollout(c, &theta, false, &mut unused)?;
            Ok(env.reward(&c.target, &outcome, &theta))
        })
        .collect()
}

/// Mean greedy reward over `grid`.
pub fn offline_eval(learner: &Learner, grid: &[Context], env: &Environment) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::contract("evaluation grid is empty"));
    }
    let r = offline_rewards(learner, grid, env)?;
    Ok(r.iter().sum::<f64>() / r.len() as f64)
}

fn meta_for(config: &ExperimentConfig, algorithm: Algorithm, run_seed: u64) -> Result<ReplayMeta> {
    let m = config.master_seed;
    let world_seed = derive_seed(config.env_seed, "world", run_seed, "world");
    Ok(ReplayMeta {
        master_seed: m,
        run_seed,
        world_seed,
        learner_seed: derive_seed(m, algorithm.tag(), run_seed, "learner"),
        context_seed: derive_seed(m, "", run_seed, "context"),
        rollout_seed: derive_seed(m, "", run_seed, "rollout"),
        environment: config.environment.build(world_seed)?,
    })
}

/// One learner, one seed, the full episode loop with periodic offline
/// evaluation. Configuration errors are returned before any rollout;
/// errors during the run end it early and are recorded in the result.
pub fn run_single(config: &ExperimentConfig, algorithm: Algorithm, run_seed: u64) -> Result<RunResult> {
    let cfg = ExperimentConfig { algorithms: vec![algorithm], ..config.clone() };
    cfg.validate()?;
    let meta = meta_for(&cfg, algorithm, run_seed)?;
    let env = meta.environment.clone();
    let learner_cfg = LearnerConfig { algorithm, rng_seed: meta.learner_seed, ..cfg.learner.clone() };
    let mut learner = Learner::new(env.clone(), learner_cfg)?;
    let grid = cfg.grid_for(&env).contexts(&env)?;
    let budget = cfg.episode_budget();

    let started = Instant::now();
    let mut context_rng = ChaCha8Rng::seed_from_u64(meta.context_seed);
    let mut rollout_rng = ChaCha8Rng::seed_from_u64(meta.rollout_seed);
    let mut result = RunResult {
        algorithm,
        seed: run_seed,
        online_rewards: Vec::with_capacity(budget),
        offline: Vec::new(),
        contexts: Vec::with_capacity(budget),
        final_eval: None,
        meta,
        error: None,
        wall_clock_secs: 0.0,
    };

    let mut step = |learner: &mut Learner, result: &mut RunResult| -> Result<()> {
        let observed = if algorithm.is_active() { None } else { Some(cfg.sampler.sample(&env, &mut context_rng)?) };
        let record = learner.run_episode(observed.as_ref(), &mut rollout_rng)?;
        result.online_rewards.push(record.actual_reward);
        let mut joined = record.target.clone();
        joined.extend_from_slice(&record.env_context);
        result.contexts.push(joined);
        let done = learner.episodes();
        if done % cfg.eval_period == 0 {
            let rewards = offline_rewards(learner, &grid, &env)?;
            let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
            result.offline.push(OfflinePoint { episode: done, mean_reward: mean });
            result.final_eval =
                Some(GridEval { contexts: grid.iter().map(Context::joined).collect(), rewards });
            info!("{algorithm} seed {run_seed}: episode {done}, offline {mean:.4}");
        }
        Ok(())
    };

    for _ in 0..budget {
        if let Err(e) = step(&mut learner, &mut result) {
            warn!("{algorithm} seed {run_seed} aborted at episode {}: {e}", learner.episodes());
            result.error = Some(RunError { kind: e.kind().into(), message: e.to_string(), episode: learner.episodes() });
            break;
        }
    }
    result.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(result)
}

/// The configured learner over every configured seed.
pub fn run(config: &ExperimentConfig) -> Result<Vec<RunResult>> {
    config.validate()?;
    config.seeds.par_iter().map(|&s| run_single(config, config.learner.algorithm, s)).collect()
}

/// Every configured algorithm over every configured seed, runs in parallel.
/// Results are ordered by algorithm, then seed.
pub fn study(config: &ExperimentConfig) -> Result<Vec<RunResult>> {
    config.validate()?;
    let jobs: Vec<(Algorithm, u64)> =
        config.algorithm_list().into_iter().flat_map(|a| config.seeds.iter().map(move |&s| (a, s))).collect();
    jobs.par_iter().map(|&(a, s)| run_single(config, a, s)).collect()
}

/// Active-learning study: the environment and every algorithm must be active.
pub fn active_study(config: &ExperimentConfig) -> Result<Vec<RunResult>> {
    if let Some(a) = config.algorithm_list().into_iter().find(|a| !a.is_active()) {
        return Err(Error::config(format!("`{a}` is passive; the active study needs context-choosing learners")));
    }
    if !config.environment.build(config.env_seed)?.is_active() {
        return Err(Error::config("the active study needs an active environment"));
    }
    study(config)
}

/// Mean greedy reward of one algorithm on seen and unseen evaluation contexts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMeans {
    pub algorithm: Algorithm,
    pub seen: f64,
    pub unseen: f64,
    /// `seen - unseen`.
    pub difference: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneralizationReport {
    pub groups: Vec<GroupMeans>,
    pub runs: Vec<RunResult>,
}

impl GeneralizationReport {
    pub fn group(&self, a: Algorithm) -> Option<&GroupMeans> {
        self.groups.iter().find(|g| g.algorithm == a)
    }
}

impl PartialEq for GeneralizationReport {
    fn eq(&self, other: &Self) -> bool {
        self.groups == other.groups && self.runs == other.runs
    }
}

/// Train on the quadrant region only, then split the final evaluation grid
/// by membership in the training region (closed sets).
pub fn generalization_study(config: &ExperimentConfig) -> Result<GeneralizationReport> {
    let mut cfg = config.clone();
    cfg.sampler = ContextSampler::quadrants();
    let budget = cfg.episode_budget();
    // One evaluation, on the final learner.
    cfg.eval_period = budget;
    let env = cfg.environment.build(cfg.env_seed)?;
    if cfg.eval_grid.is_none() {
        cfg.eval_grid = Some(GridSpec::default_for(&env));
    }
    let runs = study(&cfg)?;
    let mut groups = Vec::new();
    for a in cfg.algorithm_list() {
        let (mut seen, mut unseen) = (Vec::new(), Vec::new());
        for r in runs.iter().filter(|r| r.algorithm == a) {
            let Some(ev) = &r.final_eval else { continue };
            let (mut s, mut u) = (Vec::new(), Vec::new());
            for (c, v) in ev.contexts.iter().zip(&ev.rewards) {
                if cfg.sampler.contains(&env, c) { s.push(*v) } else { u.push(*v) }
            }
            seen.push(s.iter().sum::<f64>() / s.len().max(1) as f64);
            unseen.push(u.iter().sum::<f64>() / u.len().max(1) as f64);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let (s, u) = (mean(&seen), mean(&unseen));
        groups.push(GroupMeans { algorithm: a, seen: s, unseen: u, difference: s - u });
    }
    Ok(GeneralizationReport { groups, runs })
}
