//! Box-constrained maximization: DIRECT for global search, projected L-BFGS
//! for local refinement, and the composite of the two.

mod direct;
mod lbfgs;
mod space;

pub use direct::{direct_maximize, DirectOutcome, DIRECT_EPSILON};
pub use lbfgs::{fd_gradient, lbfgs_refine, lbfgs_refine_with_grad, LocalOutcome, LBFGS_MEMORY};
pub use space::SearchSpace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum unit-cube distance between refinement starts.
const START_SEPARATION: f64 = 0.1;

/// Budgets for [`global_then_local`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    /// DIRECT evaluations per search dimension.
    pub direct_evals_per_dim: usize,
    pub refine_starts: usize,
    pub lbfgs_iters: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig { direct_evals_per_dim: 500, refine_starts: 3, lbfgs_iters: 100 }
    }
}

impl OptimConfig {
    pub fn direct_budget(&self, dim: usize) -> usize {
        (self.direct_evals_per_dim * dim).max(2 * dim + 1)
    }
}

/// DIRECT followed by L-BFGS from the incumbent and from the next
/// `refine_starts - 1` best well-separated DIRECT rectangles.
pub fn global_then_local<F>(
    mut f: F,
    space: &SearchSpace,
    direct_budget: usize,
    refine_starts: usize,
    lbfgs_iters: usize,
) -> Result<DirectOutcome>
where
    F: FnMut(&[f64]) -> f64,
{
    let starts = global_phase(&mut f, space, direct_budget, refine_starts)?;
    let mut evaluations = starts.1;
    let mut best = (starts.0[0].0.clone(), starts.0[0].1);
    for (x0, v0) in starts.0 {
        if !v0.is_finite() {
            continue;
        }
        let mut counted = |x: &[f64]| {
            evaluations += 1;
            f(x)
        };
        let local = lbfgs_refine(&mut counted, &x0, space, lbfgs_iters)?;
        if local.value > best.1 {
            best = (local.x, local.value);
        }
    }
    Ok(DirectOutcome { x: best.0, value: best.1, evaluations })
}

/// As [`global_then_local`], with the local phase driven by an analytic
/// gradient `fg(x) -> (value, gradient)`.
pub fn global_then_local_with_grad<F, G>(
    mut f: F,
    mut fg: G,
    space: &SearchSpace,
    direct_budget: usize,
    refine_starts: usize,
    lbfgs_iters: usize,
) -> Result<DirectOutcome>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (starts, mut evaluations) = global_phase(&mut f, space, direct_budget, refine_starts)?;
    let mut best = (starts[0].0.clone(), starts[0].1);
    for (x0, v0) in starts {
        if !v0.is_finite() {
            continue;
        }
        let mut counted = |x: &[f64]| {
            evaluations += 1;
            fg(x)
        };
        let local = lbfgs_refine_with_grad(&mut counted, &x0, space, lbfgs_iters)?;
        if local.value > best.1 {
            best = (local.x, local.value);
        }
    }
    Ok(DirectOutcome { x: best.0, value: best.1, evaluations })
}

fn global_phase<F>(
    f: &mut F,
    space: &SearchSpace,
    direct_budget: usize,
    refine_starts: usize,
) -> Result<(Vec<(Vec<f64>, f64)>, usize)>
where
    F: FnMut(&[f64]) -> f64,
{
    if refine_starts == 0 {
        return Err(Error::contract("refine_starts must be at least 1"));
    }
    let state = direct::direct_search(&mut *f, space, direct_budget)?;
    let mut starts = state.starts(space, refine_starts, START_SEPARATION);
    if starts.is_empty() {
        let o = state.outcome(space);
        starts.push((o.x, o.value));
    }
    Ok((starts, state.evaluations))
}
