use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algorithms::{Algorithm, LearnerConfig};
use crate::error::{Error, Result};
use crate::experience::Context;
use crate::optim::SearchSpace;
use crate::sim::{EnvKind, Environment};

/// Distribution of observed contexts over the joined `(s^t, s^e)` box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContextSampler {
    /// Uniform over the environment's context box.
    Uniform,
    /// Uniform over a union of boxes; a box is picked with probability
    /// proportional to its volume.
    Union { boxes: Vec<SearchSpace> },
}

impl ContextSampler {
    /// Training region of the generalization study: the upper-left and
    /// lower-right quadrants of the cannon's target box.
    pub fn quadrants() -> Self {
        let w = crate::sim::cannon::TARGET_HALF_WIDTH;
        ContextSampler::Union {
            boxes: vec![
                SearchSpace::new(vec![-w, 0.0], vec![0.0, w]).expect("static bounds"),
                SearchSpace::new(vec![0.0, -w], vec![w, 0.0]).expect("static bounds"),
            ],
        }
    }

    pub fn validate(&self, env: &Environment) -> Result<()> {
        if let ContextSampler::Union { boxes } = self {
            let full = env.context_space();
            if boxes.is_empty() {
                return Err(Error::config("context sampler needs at least one box"));
            }
            for b in boxes {
                if b.dim() != full.dim() || !full.contains(b.lower()) || !full.contains(b.upper()) {
                    return Err(Error::config("sampler box must lie inside the context box"));
                }
            }
        }
        Ok(())
    }

    /// Closed-set membership in the sampled region.
    pub fn contains(&self, env: &Environment, joined: &[f64]) -> bool {
        match self {
            ContextSampler::Uniform => env.context_space().contains(joined),
            ContextSampler::Union { boxes } => boxes.iter().any(|b| b.contains(joined)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, env: &Environment, rng: &mut R) -> Result<Context> {
        let joined = match self {
            ContextSampler::Uniform => env.context_space().sample_uniform(rng),
            ContextSampler::Union { boxes } => {
                let vols: Vec<f64> = boxes.iter().map(|b| (0..b.dim()).map(|i| b.width(i)).product()).collect();
                let mut u = rng.gen::<f64>() * vols.iter().sum::<f64>();
                let mut pick = boxes.len() - 1;
                for (i, v) in vols.iter().enumerate() {
                    if u < *v {
                        pick = i;
                        break;
                    }
                    u -= v;
                }
                boxes[pick].sample_uniform(rng)
            }
        };
        env.split_context(&joined)
    }
}

/// Offline evaluation contexts: a regular grid over some context axes, the
/// remaining axes pinned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub per_axis: usize,
    /// Joined-context axes spanned by the grid.
    pub axes: Vec<usize>,
    /// Full joined context supplying the values of axes not in `axes`.
    pub base: Vec<f64>,
}

impl GridSpec {
    /// 15x15 over the aim point for the passive tasks; 8x8 with the shoot
    /// indicator at 0 for the active cannon.
    pub fn default_for(env: &Environment) -> Self {
        let mut base = env.context_space().center();
        let per_axis = if env.is_active() {
            base[2] = 0.0;
            8
        } else {
            15
        };
        GridSpec { per_axis, axes: vec![0, 1], base }
    }

    pub fn validate(&self, env: &Environment) -> Result<()> {
        let space = env.context_space();
        if self.per_axis == 0 || self.axes.is_empty() {
            return Err(Error::config("evaluation grid must be non-empty"));
        }
        if self.base.len() != space.dim() || self.axes.iter().any(|&a| a >= space.dim()) {
            return Err(Error::config("evaluation grid does not match the context dimension"));
        }
        if !space.contains(&self.base) {
            return Err(Error::config("evaluation grid lies outside the context box"));
        }
        Ok(())
    }

    pub fn contexts(&self, env: &Environment) -> Result<Vec<Context>> {
        let space = env.context_space();
        let sub = SearchSpace::new(
            self.axes.iter().map(|&a| space.lower()[a]).collect(),
            self.axes.iter().map(|&a| space.upper()[a]).collect(),
        )?;
        sub.grid(self.per_axis)
            .into_iter()
            .map(|p| {
                let mut c = self.base.clone();
                for (v, &a) in p.iter().zip(&self.axes) {
                    c[a] = *v;
                }
                env.split_context(&c)
            })
            .collect()
    }
}

pub const DEFAULT_PASSIVE_EPISODES: usize = 150;
pub const DEFAULT_ACTIVE_EPISODES: usize = 100;
pub const DEFAULT_EVAL_PERIOD: usize = 10;

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_period() -> usize {
    DEFAULT_EVAL_PERIOD
}

/// Everything needed to reproduce a run or a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub environment: EnvKind,
    /// Base seed of the simulated worlds; each run seed gets its own world.
    #[serde(default)]
    pub env_seed: u64,
    #[serde(default)]
    pub learner: LearnerConfig,
    /// Algorithms compared by a study; defaults to the learner's own.
    #[serde(default)]
    pub algorithms: Vec<Algorithm>,
    /// Episode budget; defaults to 150 (passive) or 100 (active).
    #[serde(default)]
    pub episodes: Option<usize>,
    #[serde(default = "default_sampler")]
    pub sampler: ContextSampler,
    /// Defaults to [`GridSpec::default_for`].
    #[serde(default)]
    pub eval_grid: Option<GridSpec>,
    #[serde(default = "default_period")]
    pub eval_period: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_sampler() -> ContextSampler {
    ContextSampler::Uniform
}

impl ExperimentConfig {
    pub fn new(environment: EnvKind, algorithm: Algorithm) -> Self {
        ExperimentConfig {
            environment,
            env_seed: 0,
            learner: LearnerConfig::new(algorithm),
            algorithms: Vec::new(),
            episodes: None,
            sampler: ContextSampler::Uniform,
            eval_grid: None,
            eval_period: DEFAULT_EVAL_PERIOD,
            seeds: default_seeds(),
            master_seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("bad experiment config: {e}")))
    }

    pub fn episode_budget(&self) -> usize {
        self.episodes.unwrap_or(match self.environment {
            EnvKind::ActiveCannon => DEFAULT_ACTIVE_EPISODES,
            _ => DEFAULT_PASSIVE_EPISODES,
        })
    }

    pub fn algorithm_list(&self) -> Vec<Algorithm> {
        if self.algorithms.is_empty() {
            vec![self.learner.algorithm]
        } else {
            self.algorithms.clone()
        }
    }

    pub fn grid_for(&self, env: &Environment) -> GridSpec {
        self.eval_grid.clone().unwrap_or_else(|| GridSpec::default_for(env))
    }

    /// Check everything that can be checked before the first rollout.
    pub fn validate(&self) -> Result<()> {
        if self.episode_budget() == 0 {
            return Err(Error::config("episode budget must be at least 1"));
        }
        if self.eval_period == 0 {
            return Err(Error::config("evaluation period must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("need at least one seed"));
        }
        let env = self.environment.build(self.env_seed)?;
        self.sampler.validate(&env)?;
        self.grid_for(&env).validate(&env)?;
        for a in self.algorithm_list() {
            let cfg = LearnerConfig { algorithm: a, ..self.learner.clone() };
            cfg.validate(&env)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadrant_membership() {
        let env = EnvKind::Cannon.build(0).unwrap();
        let q = ContextSampler::quadrants();
        assert!(q.contains(&env, &[-5.0, 5.0]));
        assert!(!q.contains(&env, &[5.0, 5.0]));
        assert!(q.contains(&env, &[0.0, 0.0]));
        assert!(!q.contains(&env, &[-5.0, -5.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..500 {
            let c = q.sample(&env, &mut rng).unwrap();
            assert!(q.contains(&env, &c.target));
        }
    }

    #[test]
    fn default_grids() {
        let env = EnvKind::Cannon.build(0).unwrap();
        assert_eq!(GridSpec::default_for(&env).contexts(&env).unwrap().len(), 225);
        let active = EnvKind::ActiveCannon.build(0).unwrap();
        let g = GridSpec::default_for(&active).contexts(&active).unwrap();
        assert_eq!(g.len(), 64);
        assert!(g.iter().all(|c| c.target[2] == 0.0));
    }

    #[test]
    fn config_defaults_and_errors() {
        let c = ExperimentConfig::from_json(r#"{"environment": "cannon", "learner": {"algorithm": "bocps"}}"#).unwrap();
        assert_eq!(c.episode_budget(), 150);
        assert_eq!(c.seeds.len(), 10);
        c.validate().unwrap();
        assert!(ExperimentConfig::from_json(r#"{"environment": "cannon", "learner": {"algorithm": "bo-cps"}}"#).is_err());
        let a = ExperimentConfig::new(EnvKind::ActiveCannon, Algorithm::Bocps);
        assert!(a.validate().is_err());
        assert_eq!(ExperimentConfig::new(EnvKind::ActiveCannon, Algorithm::Faces).episode_budget(), 100);
    }
}
