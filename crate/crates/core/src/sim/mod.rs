//! Simulated environments. Every rollout depends only on the environment
//! context, the parameters and the rng stream it is handed; the commanded
//! target never enters the dynamics.

pub mod cannon;
pub mod dmp;
pub mod thrower;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experience::{Context, Outcome, RewardFn};
use crate::optim::SearchSpace;

pub use cannon::{active_cannon_reward, cannon_reward, CannonWorld, Hill, LaunchParams, SHOOT_THRESHOLD};
pub use dmp::{dmp_imitate, dmp_integrate, dmp_integrate_from, minimum_jerk, DmpParams, Trajectory};
pub use thrower::{ballistic_landing, thrower_reward, ThrowerWorld};

/// Serializable environment selector used by experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Cannon,
    ActiveCannon,
    Thrower,
}

impl EnvKind {
    pub fn build(self, seed: u64) -> Result<Environment> {
        Ok(match self {
            EnvKind::Cannon => Environment::Cannon(CannonWorld::generate(seed)),
            EnvKind::ActiveCannon => Environment::ActiveCannon(CannonWorld::generate(seed)),
            EnvKind::Thrower => Environment::Thrower(ThrowerWorld::standard()?),
        })
    }
}

/// A fully specified world. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "world", rename_all = "snake_case")]
pub enum Environment {
    /// Target is the 2-D aim point.
    Cannon(CannonWorld),
    /// Target is the aim point plus a shoot indicator in [0, 1].
    ActiveCannon(CannonWorld),
    /// Target is the 2-D aim point, environment context the hand start offset.
    Thrower(ThrowerWorld),
}

fn cannon_target_space() -> SearchSpace {
    SearchSpace::cube(2, -cannon::TARGET_HALF_WIDTH, cannon::TARGET_HALF_WIDTH).expect("static bounds")
}

impl Environment {
    pub fn kind(&self) -> EnvKind {
        match self {
            Environment::Cannon(_) => EnvKind::Cannon,
            Environment::ActiveCannon(_) => EnvKind::ActiveCannon,
            Environment::Thrower(_) => EnvKind::Thrower,
        }
    }

    pub fn is_active(&self) -> bool {
        matches!(self, Environment::ActiveCannon(_))
    }

    pub fn target_space(&self) -> SearchSpace {
        match self {
            Environment::Cannon(_) => cannon_target_space(),
            Environment::ActiveCannon(_) => {
                cannon_target_space().product(&SearchSpace::new(vec![0.0], vec![1.0]).expect("static bounds"))
            }
            Environment::Thrower(w) => w.target_space.clone(),
        }
    }

    pub fn env_space(&self) -> SearchSpace {
        match self {
            Environment::Cannon(_) | Environment::ActiveCannon(_) => SearchSpace::empty(),
            Environment::Thrower(w) => w.start_space.clone(),
        }
    }

    pub fn context_space(&self) -> SearchSpace {
        self.target_space().product(&self.env_space())
    }

    pub fn param_space(&self) -> SearchSpace {
        match self {
            Environment::Cannon(_) | Environment::ActiveCannon(_) => LaunchParams::space(),
            Environment::Thrower(_) => ThrowerWorld::param_space(),
        }
    }

    /// Split a joined `(target, env)` vector.
    pub fn split_context(&self, joined: &[f64]) -> Result<Context> {
        let t = self.target_space().dim();
        if joined.len() != t + self.env_space().dim() {
            return Err(Error::contract("context has the wrong dimension"));
        }
        Ok(Context::new(joined[..t].to_vec(), joined[t..].to_vec()))
    }

    /// Execute one rollout. `train_mode` enables execution noise where the
    /// environment has any.
    pub fn rollout(&self, context: &Context, params: &[f64], train_mode: bool, rng: &mut dyn RngCore) -> Result<Outcome> {
        if context.env.len() != self.env_space().dim() {
            return Err(Error::contract("environment context has the wrong dimension"));
        }
        let mut outcome = match self {
            Environment::Cannon(w) | Environment::ActiveCannon(w) => {
                w.rollout(LaunchParams::from_slice(params)?, train_mode, rng)?
            }
            Environment::Thrower(w) => w.rollout(&context.env, params)?,
        };
        if self.is_active() {
            // The indicator is reward-only, so the achieved indicator is "shoot".
            outcome.achieved_target.push(0.0);
        }
        Ok(outcome)
    }

    pub fn reward(&self, target: &[f64], outcome: &Outcome, params: &[f64]) -> f64 {
        match self {
            Environment::Cannon(_) => cannon_reward(target, outcome, params),
            Environment::ActiveCannon(_) => active_cannon_reward(target, outcome, params),
            Environment::Thrower(_) => thrower_reward(target, outcome),
        }
    }
}

impl RewardFn for Environment {
    fn reward(&self, target: &[f64], outcome: &Outcome, params: &[f64]) -> f64 {
        Environment::reward(self, target, outcome, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn target_never_enters_dynamics() {
        for kind in [EnvKind::Cannon, EnvKind::ActiveCannon, EnvKind::Thrower] {
            let env = kind.build(5).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let ps = env.param_space();
            for _ in 0..5 {
                let theta = ps.sample_uniform(&mut rng);
                let e = env.env_space().sample_uniform(&mut rng);
                let a = Context::new(env.target_space().sample_uniform(&mut rng), e.clone());
                let b = Context::new(env.target_space().sample_uniform(&mut rng), e);
                let oa = env.rollout(&a, &theta, true, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
                let ob = env.rollout(&b, &theta, true, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
                assert_eq!(oa, ob);
                assert_eq!(oa.achieved_target.len(), env.target_space().dim());
            }
        }
    }

    #[test]
    fn serde_round_trip() {
        let env = EnvKind::Cannon.build(3).unwrap();
        let json = serde_json::to_string(&env).unwrap();
        let back: Environment = serde_json::from_str(&json).unwrap();
        assert_eq!(env, back);
    }
}
