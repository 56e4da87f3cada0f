//! Factored experience: rollouts are stored with the sufficient statistics
//! of their outcome, so they can be re-scored under any target context.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::SearchSpace;

/// A task context split into its target part (reward only) and its
/// environment part (dynamics).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub target: Vec<f64>,
    pub env: Vec<f64>,
}

impl Context {
    pub fn new(target: Vec<f64>, env: Vec<f64>) -> Self {
        Context { target, env }
    }

    /// Target-only context.
    pub fn target(target: Vec<f64>) -> Self {
        Context { target, env: Vec::new() }
    }

    /// `(s^t, s^e)` concatenated.
    pub fn joined(&self) -> Vec<f64> {
        let mut v = self.target.clone();
        v.extend_from_slice(&self.env);
        v
    }
}

/// Reward-sufficient statistics of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub stats: Vec<f64>,
    pub achieved_target: Vec<f64>,
}

/// Reward as a function of a target, an outcome and the parameters that produced it.
pub trait RewardFn {
    fn reward(&self, target: &[f64], outcome: &Outcome, params: &[f64]) -> f64;
}

impl<F> RewardFn for F
where
    F: Fn(&[f64], &Outcome, &[f64]) -> f64,
{
    fn reward(&self, target: &[f64], outcome: &Outcome, params: &[f64]) -> f64 {
        self(target, outcome, params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    /// Target commanded when the rollout was collected.
    pub target: Vec<f64>,
    pub env_context: Vec<f64>,
    pub params: Vec<f64>,
    pub outcome: Outcome,
    /// Reward under the collection-time target.
    pub actual_reward: f64,
}

/// One re-scored training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub reward: f64,
}

/// Append-only store of rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceStore {
    param_space: SearchSpace,
    records: Vec<RolloutRecord>,
}

impl ExperienceStore {
    pub fn new(param_space: SearchSpace) -> Self {
        ExperienceStore { param_space, records: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[RolloutRecord] {
        &self.records
    }

    pub fn param_space(&self) -> &SearchSpace {
        &self.param_space
    }

    pub fn append(&mut self, record: RolloutRecord) -> Result<()> {
        if !self.param_space.contains(&record.params) {
            return Err(Error::contract(format!("parameters {:?} outside the parameter box", record.params)));
        }
        if record.outcome.achieved_target.len() != record.target.len() {
            return Err(Error::contract("achieved target and commanded target differ in dimension"));
        }
        if !record.actual_reward.is_finite() {
            return Err(Error::contract("non-finite reward"));
        }
        self.records.push(record);
        Ok(())
    }

    /// Query-specific dataset: inputs `(s^e_i, theta_i)` with rewards re-scored
    /// for `target`. Never re-simulates.
    pub fn reevaluate(&self, reward_fn: &dyn RewardFn, target: &[f64]) -> Vec<Sample> {
        self.records
            .iter()
            .map(|r| {
                let mut input = r.env_context.clone();
                input.extend_from_slice(&r.params);
                Sample { input, reward: reward_fn.reward(target, &r.outcome, &r.params) }
            })
            .collect()
    }

    /// Joint-space dataset `((s^t_i, s^e_i, theta_i), R_i)` with collection-time rewards.
    pub fn joint_dataset(&self) -> Vec<Sample> {
        self.records
            .iter()
            .map(|r| {
                let mut input = r.target.clone();
                input.extend_from_slice(&r.env_context);
                input.extend_from_slice(&r.params);
                Sample { input, reward: r.actual_reward }
            })
            .collect()
    }

    /// Write one JSON record per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(param_space: SearchSpace, input: R) -> Result<Self> {
        let mut store = ExperienceStore::new(param_space);
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            store.append(serde_json::from_str(&line)?)?;
        }
        Ok(store)
    }
}

/// Relabel a rollout with the target it actually achieved. Returns the joint
/// input `(s^t_achieved, s^e, theta)` and the reward under that target.
pub fn her_augment(record: &RolloutRecord, reward_fn: &dyn RewardFn) -> Sample {
    let achieved = &record.outcome.achieved_target;
    let mut input = achieved.clone();
    input.extend_from_slice(&record.env_context);
    input.extend_from_slice(&record.params);
    Sample { input, reward: reward_fn.reward(achieved, &record.outcome, &record.params) }
}
