//! Parameter selection for the Bayesian-optimization learners. Every rule
//! fits a surrogate on a dataset derived from the experience store and
//! maximizes an acquisition over the parameter box (and, for the active
//! learners, over the context box too).

use rand::Rng;

use crate::acquisition::{gp_ucb, AcesAcquisition, AcqConfig, FacesAcquisition, RepresenterBelief, RepresenterSet};
use crate::error::{Error, Result};
use crate::experience::{her_augment, Context, ExperienceStore, RewardFn, Sample};
use crate::gp::{KernelHyperparams, Surrogate};
use crate::optim::{global_then_local, global_then_local_with_grad, OptimConfig, SearchSpace};

/// Shared knobs of a surrogate-based selection.
#[derive(Debug, Clone, Copy)]
pub struct BoSettings<'a> {
    pub hyper: &'a KernelHyperparams,
    pub kappa: f64,
    pub optim: &'a OptimConfig,
}

fn split(data: &[Sample]) -> (Vec<Vec<f64>>, Vec<f64>) {
    (data.iter().map(|s| s.input.clone()).collect(), data.iter().map(|s| s.reward).collect())
}

fn joined(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = a.to_vec();
    v.extend_from_slice(b);
    v
}

/// Fit a surrogate on `data` over `space`.
pub fn fit_surrogate(data: &[Sample], space: &SearchSpace, hyper: &KernelHyperparams) -> Result<Surrogate> {
    let (x, y) = split(data);
    Surrogate::fit(space.clone(), &x, &y, hyper)
}

/// Maximize UCB (or the mean when `kappa == 0`) of `surrogate` over the
/// parameters, with the leading inputs fixed to `prefix`.
pub fn maximize_over_params(
    surrogate: &Surrogate,
    prefix: &[f64],
    params: &SearchSpace,
    kappa: f64,
    optim: &OptimConfig,
) -> Result<Vec<f64>> {
    if prefix.len() + params.dim() != surrogate.space().dim() {
        return Err(Error::contract("query context does not match the surrogate input"));
    }
    let p0 = prefix.len();
    let at = |theta: &[f64]| joined(prefix, theta);
    let value = |theta: &[f64]| {
        let x = at(theta);
        if kappa == 0.0 {
            surrogate.mean(&x)
        } else {
            surrogate.predict(&x).map(|(m, s)| gp_ucb(m, s, kappa)).unwrap_or(f64::NEG_INFINITY)
        }
    };
    let value_grad = |theta: &[f64]| {
        let x = at(theta);
        if kappa == 0.0 {
            let (m, g) = surrogate.mean_with_grad(&x);
            (m, g[p0..].to_vec())
        } else {
            match surrogate.predict_with_grad(&x) {
                Ok((m, s, dm, ds)) => {
                    (gp_ucb(m, s, kappa), dm[p0..].iter().zip(&ds[p0..]).map(|(a, b)| a + kappa * b).collect())
                }
                Err(_) => (f64::NEG_INFINITY, vec![0.0; theta.len()]),
            }
        }
    };
    let out = global_then_local_with_grad(
        value,
        value_grad,
        params,
        optim.direct_budget(params.dim()),
        optim.refine_starts,
        optim.lbfgs_iters,
    )?;
    Ok(out.x)
}

fn check_query(query: &Context, target_space: &SearchSpace, env_space: &SearchSpace) -> Result<()> {
    if query.target.len() != target_space.dim() || query.env.len() != env_space.dim() {
        return Err(Error::contract("query context has the wrong dimension"));
    }
    if !target_space.contains(&query.target) || !env_space.contains(&query.env) {
        return Err(Error::contract("query context outside its box"));
    }
    Ok(())
}

/// Joint-space selection: one surrogate over `(s^t, s^e, theta)` trained on
/// collection-time rewards.
pub fn bocps_select(
    data: &[Sample],
    target_space: &SearchSpace,
    env_space: &SearchSpace,
    params: &SearchSpace,
    query: &Context,
    s: &BoSettings,
) -> Result<Vec<f64>> {
    check_query(query, target_space, env_space)?;
    let space = target_space.product(env_space).product(params);
    let surrogate = fit_surrogate(data, &space, s.hyper)?;
    maximize_over_params(&surrogate, &query.joined(), params, s.kappa, s.optim)
}

/// The store's collection-time dataset plus one hindsight sample per record.
pub fn her_dataset(store: &ExperienceStore, reward_fn: &dyn RewardFn) -> Vec<Sample> {
    let mut data = store.joint_dataset();
    data.extend(store.records().iter().map(|r| her_augment(r, reward_fn)));
    data
}

/// Joint-space selection with hindsight relabeling. With `augment` off this
/// is exactly [`bocps_select`].
#[allow(clippy::too_many_arguments)]
pub fn bofcps_her_select(
    store: &ExperienceStore,
    reward_fn: &dyn RewardFn,
    target_space: &SearchSpace,
    env_space: &SearchSpace,
    query: &Context,
    s: &BoSettings,
    augment: bool,
) -> Result<Vec<f64>> {
    let data = if augment { her_dataset(store, reward_fn) } else { store.joint_dataset() };
    bocps_select(&data, target_space, env_space, store.param_space(), query, s)
}

/// Factored selection: re-score every stored rollout under the query target
/// and fit a surrogate over `(s^e, theta)` only.
pub fn bofcps_select(
    store: &ExperienceStore,
    reward_fn: &dyn RewardFn,
    target_space: &SearchSpace,
    env_space: &SearchSpace,
    query: &Context,
    s: &BoSettings,
) -> Result<Vec<f64>> {
    check_query(query, target_space, env_space)?;
    let data = store.reevaluate(reward_fn, &query.target);
    let space = env_space.product(store.param_space());
    let surrogate = fit_surrogate(&data, &space, s.hyper)?;
    maximize_over_params(&surrogate, &query.env, store.param_space(), s.kappa, s.optim)
}

/// Factored selection with entropy search at the query context: the
/// parameters whose observation most reduces uncertainty about the best
/// parameters for this context.
#[allow(clippy::too_many_arguments)]
pub fn bofcps_es_select<R: Rng + ?Sized>(
    store: &ExperienceStore,
    reward_fn: &dyn RewardFn,
    target_space: &SearchSpace,
    env_space: &SearchSpace,
    query: &Context,
    hyper: &KernelHyperparams,
    acq: &AcqConfig,
    optim: &OptimConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_query(query, target_space, env_space)?;
    acq.validate()?;
    let params = store.param_space();
    let data = store.reevaluate(reward_fn, &query.target);
    let space = env_space.product(params);
    let surrogate = fit_surrogate(&data, &space, hyper)?;
    let env_unit = env_space.to_unit(&query.env);
    let candidates: Vec<Vec<f64>> =
        params.latin_hypercube(acq.n_candidates, rng).iter().map(|t| params.to_unit(t)).collect();
    let belief = RepresenterBelief::new(surrogate.model(), &env_unit, &candidates, acq, rng)?;
    let model = surrogate.model();
    let mut scratch = Vec::new();
    let mut objective = |theta: &[f64]| {
        let q = joined(&env_unit, &params.to_unit(theta));
        belief.gain(model, &q, &model.whitened(&q), &mut scratch)
    };
    let out = global_then_local(
        &mut objective,
        params,
        optim.direct_budget(params.dim()),
        optim.refine_starts,
        optim.lbfgs_iters,
    )?;
    Ok(out.x)
}

fn unit_representers(reps: &RepresenterSet, contexts: &SearchSpace, params: &SearchSpace) -> RepresenterSet {
    RepresenterSet {
        contexts: reps.contexts.iter().map(|c| contexts.to_unit(c)).collect(),
        candidates: reps.candidates.iter().map(|cs| cs.iter().map(|t| params.to_unit(t)).collect()).collect(),
    }
}

/// Active joint-space selection: entropy search over `(s, theta)` with one
/// surrogate on collection-time rewards. Returns the joined context and the
/// parameters.
#[allow(clippy::too_many_arguments)]
pub fn aces_select<R: Rng + ?Sized>(
    data: &[Sample],
    context_space: &SearchSpace,
    params: &SearchSpace,
    hyper: &KernelHyperparams,
    acq: &AcqConfig,
    optim: &OptimConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    acq.validate()?;
    let space = context_space.product(params);
    let surrogate = fit_surrogate(data, &space, hyper)?;
    let reps = RepresenterSet::sample(context_space, params, acq.n_representers, acq.n_candidates, rng);
    let unit = unit_representers(&reps, context_space, params);
    let acquisition = AcesAcquisition::new(surrogate.model(), &unit, acq)?;
    let out = global_then_local(
        |q: &[f64]| acquisition.evaluate(&space.to_unit(q)),
        &space,
        optim.direct_budget(space.dim()),
        optim.refine_starts,
        optim.lbfgs_iters,
    )?;
    let c = context_space.dim();
    Ok((out.x[..c].to_vec(), out.x[c..].to_vec()))
}

/// Representer targets whose re-scored datasets drive the shared
/// hyperparameter fit of the factored active learner.
pub const FACES_HYPER_DATASETS: usize = 3;

/// Active factored selection. Each representer context gets its own
/// target-specific surrogate over `(s^e, theta)`; the summed information gain
/// is maximized over `(s^e, theta)`. The commanded target does not influence
/// what is learned, so it is drawn uniformly.
#[allow(clippy::too_many_arguments)]
pub fn faces_select<R: Rng + ?Sized>(
    store: &ExperienceStore,
    reward_fn: &dyn RewardFn,
    target_space: &SearchSpace,
    env_space: &SearchSpace,
    hyper: &KernelHyperparams,
    acq: &AcqConfig,
    optim: &OptimConfig,
    rng: &mut R,
) -> Result<(Context, Vec<f64>)> {
    acq.validate()?;
    let params = store.param_space();
    let contexts = target_space.product(env_space);
    let reps = RepresenterSet::sample(&contexts, params, acq.n_representers, acq.n_candidates, rng);
    let t = target_space.dim();
    let space = env_space.product(params);
    let models = reps
        .contexts
        .iter()
        .map(|c| {
            let data = store.reevaluate(reward_fn, &c[..t]);
            Ok(fit_surrogate(&data, &space, hyper)?.into_model())
        })
        .collect::<Result<Vec<_>>>()?;
    let env_units: Vec<Vec<f64>> = reps.contexts.iter().map(|c| env_space.to_unit(&c[t..])).collect();
    let cand_units: Vec<Vec<Vec<f64>>> =
        reps.candidates.iter().map(|cs| cs.iter().map(|x| params.to_unit(x)).collect()).collect();
    let acquisition = FacesAcquisition::new(&models, &env_units, &cand_units, acq)?;
    let out = global_then_local(
        |q: &[f64]| acquisition.evaluate(&space.to_unit(q)),
        &space,
        optim.direct_budget(space.dim()),
        optim.refine_starts,
        optim.lbfgs_iters,
    )?;
    let e = env_space.dim();
    let target = target_space.sample_uniform(rng);
    Ok((Context::new(target, out.x[..e].to_vec()), out.x[e..].to_vec()))
}

/// Target vectors for the shared hyperparameter fit of [`faces_select`]:
/// the store re-scored under a few uniformly drawn targets.
pub fn faces_hyper_targets<R: Rng + ?Sized>(
    store: &ExperienceStore,
    reward_fn: &dyn RewardFn,
    target_space: &SearchSpace,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    (0..FACES_HYPER_DATASETS)
        .map(|_| {
            let target = target_space.sample_uniform(rng);
            store.reevaluate(reward_fn, &target).into_iter().map(|s| s.reward).collect()
        })
        .collect()
}
