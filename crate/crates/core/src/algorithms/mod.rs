//! Upper-level policy learners behind one episode-loop interface.

pub mod creps;
pub mod select;

use std::fmt;
use std::str::FromStr;

use log::debug;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::AcqConfig;
use crate::error::{Error, Result};
use crate::experience::{Context, ExperienceStore, RolloutRecord, Sample};
use crate::gp::{default_hyperparams, KernelHyperparams, Surrogate};
use crate::optim::{OptimConfig, SearchSpace};
use crate::sim::Environment;

pub use creps::{creps_dual, creps_update, feature_dim, weight_kl, CrepsConfig, CrepsPolicy, CrepsUpdate};
pub use select::{
    aces_select, bocps_select, bofcps_es_select, bofcps_her_select, bofcps_select, faces_hyper_targets, faces_select,
    fit_surrogate, her_dataset, maximize_over_params, BoSettings,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Joint-space GP-UCB on collection-time rewards.
    Bocps,
    /// Target-specific GP-UCB on re-scored rewards.
    Bofcps,
    /// Joint-space GP-UCB with hindsight relabeling.
    BofcpsHer,
    /// Factored learner choosing parameters by entropy search.
    BofcpsEs,
    /// Factored learner choosing parameters uniformly at random.
    BofcpsRandom,
    /// Active joint-space entropy search.
    Aces,
    /// Active factored entropy search.
    Faces,
    Creps,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::Bocps,
        Algorithm::Bofcps,
        Algorithm::BofcpsHer,
        Algorithm::BofcpsEs,
        Algorithm::BofcpsRandom,
        Algorithm::Aces,
        Algorithm::Faces,
        Algorithm::Creps,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Bocps => "bocps",
            Algorithm::Bofcps => "bofcps",
            Algorithm::BofcpsHer => "bofcps-her",
            Algorithm::BofcpsEs => "bofcps-es",
            Algorithm::BofcpsRandom => "bofcps-random",
            Algorithm::Aces => "aces",
            Algorithm::Faces => "faces",
            Algorithm::Creps => "creps",
        }
    }

    /// Chooses its own contexts.
    pub fn is_active(self) -> bool {
        matches!(self, Algorithm::Aces | Algorithm::Faces)
    }

    /// Learns target-specific models from re-scored experience.
    pub fn is_factored(self) -> bool {
        matches!(self, Algorithm::Bofcps | Algorithm::BofcpsEs | Algorithm::BofcpsRandom | Algorithm::Faces)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::config(format!("unknown algorithm tag `{s}`")))
    }
}

/// When to re-fit kernel hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefitSchedule {
    /// Refit every episode while the store holds at most this many records.
    pub dense_until: usize,
    /// Afterwards refit every `period` records.
    pub period: usize,
    /// Total optimizer starts: the warm start plus `restarts - 1` random ones.
    pub restarts: usize,
}

impl Default for RefitSchedule {
    fn default() -> Self {
        RefitSchedule { dense_until: 50, period: 5, restarts: 3 }
    }
}

impl RefitSchedule {
    pub fn due(&self, n: usize) -> bool {
        n > 0 && (n <= self.dense_until || n % self.period.max(1) == 0)
    }
}

fn default_greedy_optim() -> OptimConfig {
    OptimConfig { direct_evals_per_dim: 100, refine_starts: 2, lbfgs_iters: 50 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub acq: AcqConfig,
    /// Optimizer budgets for training-time selection.
    pub optim: OptimConfig,
    /// Optimizer budgets for greedy (offline) selection.
    pub greedy_optim: OptimConfig,
    pub refit: RefitSchedule,
    pub creps: CrepsConfig,
    pub rng_seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            algorithm: Algorithm::Bofcps,
            acq: AcqConfig::default(),
            optim: OptimConfig::default(),
            greedy_optim: default_greedy_optim(),
            refit: RefitSchedule::default(),
            creps: CrepsConfig::default(),
            rng_seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        LearnerConfig { algorithm, ..LearnerConfig::default() }
    }

    pub fn validate(&self, env: &Environment) -> Result<()> {
        self.acq.validate()?;
        for o in [&self.optim, &self.greedy_optim] {
            if o.refine_starts == 0 || o.direct_evals_per_dim == 0 {
                return Err(Error::config("optimizer budgets must be positive"));
            }
        }
        if self.refit.restarts == 0 {
            return Err(Error::config("refit restarts must be at least 1"));
        }
        if !(self.creps.epsilon > 0.0) {
            return Err(Error::config("C-REPS epsilon must be positive"));
        }
        let fdim = feature_dim(env.context_space().dim());
        if self.creps.update_period < fdim + 1 {
            return Err(Error::config(format!(
                "C-REPS update period {} is below feature dimension + 1 = {}",
                self.creps.update_period,
                fdim + 1
            )));
        }
        if self.algorithm.is_active() != env.is_active() {
            return Err(Error::config(format!(
                "algorithm `{}` does not fit the {} environment",
                self.algorithm,
                if env.is_active() { "active" } else { "passive" }
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct CrepsState {
    policy: CrepsPolicy,
    batch: Vec<(Vec<f64>, Vec<f64>, f64)>,
    kl_log: Vec<f64>,
}

/// One learner: its experience, schedules and private rng stream.
#[derive(Debug, Clone)]
pub struct Learner {
    cfg: LearnerConfig,
    env: Environment,
    store: ExperienceStore,
    episodes: usize,
    hyper: Option<KernelHyperparams>,
    refit_at: Option<usize>,
    rng: ChaCha8Rng,
    creps: Option<CrepsState>,
}

impl Learner {
    pub fn new(env: Environment, cfg: LearnerConfig) -> Result<Self> {
        cfg.validate(&env)?;
        let creps = (cfg.algorithm == Algorithm::Creps).then(|| CrepsState {
            policy: CrepsPolicy::initial(env.context_space(), env.param_space()),
            batch: Vec::new(),
            kl_log: Vec::new(),
        });
        Ok(Learner {
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            store: ExperienceStore::new(env.param_space()),
            episodes: 0,
            hyper: None,
            refit_at: None,
            creps,
            cfg,
            env,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    pub fn algorithm(&self) -> Algorithm {
        self.cfg.algorithm
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn store(&self) -> &ExperienceStore {
        &self.store
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    /// Current kernel hyperparameters, if a surrogate has been fitted yet.
    pub fn hyperparams(&self) -> Option<&KernelHyperparams> {
        self.hyper.as_ref()
    }

    pub fn creps_policy(&self) -> Option<&CrepsPolicy> {
        self.creps.as_ref().map(|c| &c.policy)
    }

    /// Weight KL divergence of every C-REPS update so far.
    pub fn creps_kl_log(&self) -> &[f64] {
        self.creps.as_ref().map_or(&[], |c| &c.kl_log)
    }

    /// Input box of this learner's surrogate.
    fn model_space(&self) -> SearchSpace {
        let params = self.env.param_space();
        if self.cfg.algorithm.is_factored() {
            self.env.env_space().product(&params)
        } else {
            self.env.context_space().product(&params)
        }
    }

    fn current_hyper(&self) -> KernelHyperparams {
        self.hyper.clone().unwrap_or_else(|| default_hyperparams(self.model_space().dim()))
    }

    /// Refit hyperparameters if the schedule says so.
    fn refresh_hyper(&mut self, inputs: &[Vec<f64>], target_sets: &[Vec<f64>]) -> Result<KernelHyperparams> {
        let n = self.store.len();
        let init = self.current_hyper();
        if self.refit_at == Some(n) || !self.cfg.refit.due(n) {
            return Ok(init);
        }
        let h = Surrogate::optimize_shared(
            &self.model_space(),
            inputs,
            target_sets,
            &init,
            self.cfg.refit.restarts,
            &mut self.rng,
        )?;
        debug!("{}: refit at n={n}: {h:?}", self.cfg.algorithm);
        self.hyper = Some(h.clone());
        self.refit_at = Some(n);
        Ok(h)
    }

    fn refresh_from(&mut self, data: &[Sample]) -> Result<KernelHyperparams> {
        let inputs: Vec<Vec<f64>> = data.iter().map(|s| s.input.clone()).collect();
        let targets: Vec<f64> = data.iter().map(|s| s.reward).collect();
        self.refresh_hyper(&inputs, &[targets])
    }

    fn check_passive_context(&self, ctx: &Context) -> Result<()> {
        let t = self.env.target_space();
        let e = self.env.env_space();
        if ctx.target.len() != t.dim() || ctx.env.len() != e.dim() || !t.contains(&ctx.target) || !e.contains(&ctx.env) {
            return Err(Error::contract("context outside the environment's context box"));
        }
        Ok(())
    }

    /// Exploratory parameter choice for a given context (passive learners).
    pub fn select(&mut self, ctx: &Context) -> Result<Vec<f64>> {
        if self.cfg.algorithm.is_active() {
            return Err(Error::contract(format!("`{}` chooses its own contexts", self.cfg.algorithm)));
        }
        self.check_passive_context(ctx)?;
        let ts = self.env.target_space();
        let es = self.env.env_space();
        let params = self.env.param_space();
        let kappa = self.cfg.acq.kappa;
        let optim = self.cfg.optim;
        match self.cfg.algorithm {
            Algorithm::Bocps | Algorithm::BofcpsHer => {
                let data = if self.cfg.algorithm == Algorithm::Bocps {
                    self.store.joint_dataset()
                } else {
                    her_dataset(&self.store, &self.env)
                };
                let hyper = self.refresh_from(&data)?;
                let s = BoSettings { hyper: &hyper, kappa, optim: &optim };
                bocps_select(&data, &ts, &es, &params, ctx, &s)
            }
            Algorithm::Bofcps => {
                let data = self.store.reevaluate(&self.env, &ctx.target);
                let hyper = self.refresh_from(&data)?;
                let s = BoSettings { hyper: &hyper, kappa, optim: &optim };
                bofcps_select(&self.store, &self.env, &ts, &es, ctx, &s)
            }
            Algorithm::BofcpsEs => {
                let data = self.store.reevaluate(&self.env, &ctx.target);
                let hyper = self.refresh_from(&data)?;
                bofcps_es_select(&self.store, &self.env, &ts, &es, ctx, &hyper, &self.cfg.acq, &optim, &mut self.rng)
            }
            Algorithm::BofcpsRandom => Ok(params.sample_uniform(&mut self.rng)),
            Algorithm::Creps => {
                let state = self.creps.as_ref().expect("C-REPS state");
                state.policy.sample(&ctx.joined(), &mut self.rng)
            }
            Algorithm::Aces | Algorithm::Faces => unreachable!("handled above"),
        }
    }

    /// Context and parameter choice of an active learner.
    pub fn choose(&mut self) -> Result<(Context, Vec<f64>)> {
        let ts = self.env.target_space();
        let es = self.env.env_space();
        let params = self.env.param_space();
        let optim = self.cfg.optim;
        match self.cfg.algorithm {
            Algorithm::Aces => {
                let data = self.store.joint_dataset();
                let hyper = self.refresh_from(&data)?;
                let (joined, theta) =
                    aces_select(&data, &self.env.context_space(), &params, &hyper, &self.cfg.acq, &optim, &mut self.rng)?;
                Ok((self.env.split_context(&joined)?, theta))
            }
            Algorithm::Faces => {
                let hyper = if self.cfg.refit.due(self.store.len()) && self.refit_at != Some(self.store.len()) {
                    let sets = faces_hyper_targets(&self.store, &self.env, &ts, &mut self.rng);
                    let inputs: Vec<Vec<f64>> = self.store.reevaluate(&self.env, &ts.center()).into_iter().map(|s| s.input).collect();
                    self.refresh_hyper(&inputs, &sets)?
                } else {
                    self.current_hyper()
                };
                faces_select(&self.store, &self.env, &ts, &es, &hyper, &self.cfg.acq, &optim, &mut self.rng)
            }
            a => Err(Error::contract(format!("`{a}` does not choose contexts"))),
        }
    }

    /// One episode. Passive learners take the observed context; active
    /// learners must be given `None` and pick their own. Rollout noise is
    /// drawn from `rollout_rng`.
    pub fn run_episode(&mut self, context: Option<&Context>, rollout_rng: &mut dyn RngCore) -> Result<RolloutRecord> {
        let (ctx, theta) = match (self.cfg.algorithm.is_active(), context) {
            (false, Some(c)) => (c.clone(), self.select(c)?),
            (true, None) => self.choose()?,
            (false, None) => return Err(Error::contract("passive learners need an observed context")),
            (true, Some(_)) => return Err(Error::contract("active learners choose their own context")),
        };
        let outcome = self.env.rollout(&ctx, &theta, true, rollout_rng)?;
        let reward = self.env.reward(&ctx.target, &outcome, &theta);
        let record = RolloutRecord {
            target: ctx.target.clone(),
            env_context: ctx.env.clone(),
            params: theta.clone(),
            outcome,
            actual_reward: reward,
        };
        self.store.append(record.clone())?;
        self.episodes += 1;
        if let Some(state) = self.creps.as_mut() {
            state.batch.push((ctx.joined(), theta, reward));
            let period = self.cfg.creps.update_period;
            if self.episodes % period == 0 {
                let start = state.batch.len().saturating_sub(period);
                let up = creps_update(&state.batch[start..], &state.policy, self.cfg.creps.epsilon)?;
                if !up.diverged {
                    state.policy = up.policy;
                }
                state.kl_log.push(up.kl);
            }
        }
        Ok(record)
    }

    /// Exploitation-only policy over the current experience. Never modifies
    /// the learner.
    pub fn greedy(&self) -> Result<GreedyPolicy<'_>> {
        let hyper = self.current_hyper();
        let kind = match self.cfg.algorithm {
            Algorithm::Creps => GreedyKind::Creps(&self.creps.as_ref().expect("C-REPS state").policy),
            a if a.is_factored() => GreedyKind::Factored(hyper),
            a => {
                let data = if a == Algorithm::BofcpsHer { her_dataset(&self.store, &self.env) } else { self.store.joint_dataset() };
                let space = self.model_space();
                GreedyKind::Joint(fit_surrogate(&data, &space, &hyper)?)
            }
        };
        Ok(GreedyPolicy { learner: self, kind })
    }
}

enum GreedyKind<'a> {
    Joint(Surrogate),
    Factored(KernelHyperparams),
    Creps(&'a CrepsPolicy),
}

/// Greedy selection rule; see [`Learner::greedy`].
pub struct GreedyPolicy<'a> {
    learner: &'a Learner,
    kind: GreedyKind<'a>,
}

impl GreedyPolicy<'_> {
    pub fn select(&self, ctx: &Context) -> Result<Vec<f64>> {
        let l = self.learner;
        l.check_passive_context(ctx)?;
        let params = l.env.param_space();
        let optim = &l.cfg.greedy_optim;
        match &self.kind {
            GreedyKind::Joint(s) => maximize_over_params(s, &ctx.joined(), &params, 0.0, optim),
            GreedyKind::Factored(h) => {
                let s = BoSettings { hyper: h, kappa: 0.0, optim };
                bofcps_select(&l.store, &l.env, &l.env.target_space(), &l.env.env_space(), ctx, &s)
            }
            GreedyKind::Creps(p) => Ok(p.mean(&ctx.joined())),
        }
    }
}

/// Uniform context draw from a box (`gamma(s)` for the passive studies).
pub fn uniform_context<R: Rng + ?Sized>(env: &Environment, rng: &mut R) -> Context {
    Context::new(env.target_space().sample_uniform(rng), env.env_space().sample_uniform(rng))
}
