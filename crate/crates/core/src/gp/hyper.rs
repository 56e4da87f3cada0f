//! Negative log marginal likelihood and its maximization over log-hyperparameters.

use log::debug;
use rand::Rng;

use super::kernel::KernelHyperparams;
use super::linalg::Cholesky;
use super::model::gram;
use crate::error::{Error, Result};
use crate::optim::{lbfgs_refine_with_grad, SearchSpace};

/// Iteration cap for each L-BFGS restart of the hyperparameter fit.
pub const HYPER_LBFGS_ITERS: usize = 60;

fn flatten(inputs: &[Vec<f64>], targets: &[f64], dim: usize) -> Result<Vec<f64>> {
    if inputs.is_empty() {
        return Err(Error::contract("marginal likelihood needs at least one observation"));
    }
    if inputs.len() != targets.len() {
        return Err(Error::contract(format!("{} inputs vs {} targets", inputs.len(), targets.len())));
    }
    if inputs.iter().any(|x| x.len() != dim) {
        return Err(Error::contract("input dimension does not match lengthscales"));
    }
    Ok(inputs.iter().flatten().copied().collect())
}

/// Negative log marginal likelihood and its gradient with respect to
/// `[log sf2, log l_1..l_d, log sn2]`.
pub fn nlml(inputs: &[Vec<f64>], targets: &[f64], h: &KernelHyperparams) -> Result<(f64, Vec<f64>)> {
    h.validate()?;
    let dim = h.dim();
    let flat = flatten(inputs, targets, dim)?;
    Ok(nlml_flat(&flat, targets, dim, h, true)?)
}

pub(crate) fn nlml_flat(
    flat: &[f64],
    targets: &[f64],
    dim: usize,
    h: &KernelHyperparams,
    with_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    nlml_shared(flat, &[targets], dim, h, with_grad)
}

/// Sum of the negative log marginal likelihoods of several target vectors
/// observed at the same inputs. One factorization serves all of them.
fn nlml_shared(
    flat: &[f64],
    target_sets: &[&[f64]],
    dim: usize,
    h: &KernelHyperparams,
    with_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    let n = flat.len() / dim.max(1);
    let k = gram(flat, dim, h);
    let (chol, _) = Cholesky::factor_with_jitter(&k, n)?;
    let sets = target_sets.len() as f64;
    let alphas: Vec<Vec<f64>> = target_sets.iter().map(|t| chol.solve(t)).collect();
    let fit: f64 = target_sets
        .iter()
        .zip(&alphas)
        .map(|(t, a)| t.iter().zip(a).map(|(x, y)| x * y).sum::<f64>())
        .sum();
    let value = 0.5 * fit + sets * (0.5 * chol.log_det() + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln());
    if !with_grad {
        return Ok((value, Vec::new()));
    }

    // d nlml / d p = -0.5 tr((sum_s a_s a_s^T - S K^{-1}) dK/dp)
    let kinv = chol.inverse();
    let outer = |i: usize, j: usize| alphas.iter().map(|a| a[i] * a[j]).sum::<f64>();
    let mut grad = vec![0.0; dim + 2];
    let inv_l2: Vec<f64> = h.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
    for i in 0..n {
        let xi = &flat[i * dim..(i + 1) * dim];
        // Diagonal: dK_ii/dlog sf2 = sf2, dK_ii/dlog sn2 = sn2.
        let w = outer(i, i) - sets * kinv[i * n + i];
        grad[0] -= 0.5 * w * h.signal_variance;
        grad[dim + 1] -= 0.5 * w * h.noise_variance;
        for j in 0..i {
            let xj = &flat[j * dim..(j + 1) * dim];
            let kf = k[i * n + j];
            // Off-diagonal terms appear twice.
            let w = 2.0 * (outer(i, j) - sets * kinv[i * n + j]);
            grad[0] -= 0.5 * w * kf;
            for d in 0..dim {
                let diff = xi[d] - xj[d];
                grad[1 + d] -= 0.5 * w * kf * diff * diff * inv_l2[d];
            }
        }
    }
    Ok((value, grad))
}

/// Box on log-hyperparameters derived from the data.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperBounds {
    pub space: SearchSpace,
    /// Central part of `space` that random restarts are drawn from. Starts
    /// near the bounds tend to land in the flat or interpolating basins.
    pub restarts: SearchSpace,
}

impl HyperBounds {
    /// Lengthscale `l_d` in `[1e-3 * span_d, 10 * span_d]` for the observed span
    /// of each input axis, noise in `[1e-8, var(y)]`, signal variance within
    /// two decades of `var(y)`.
    pub fn from_data(inputs: &[Vec<f64>], targets: &[f64]) -> Self {
        let dim = inputs.first().map_or(0, |x| x.len());
        let n = targets.len() as f64;
        let mean = targets.iter().sum::<f64>() / n;
        let var = (targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).max(1e-6);
        let mut lower = vec![(1e-2 * var).ln()];
        let mut upper = vec![(1e2 * var).ln()];
        let mut start_lower = vec![(0.5 * var).ln()];
        let mut start_upper = vec![(2.0 * var).ln()];
        for d in 0..dim {
            let lo = inputs.iter().map(|x| x[d]).fold(f64::INFINITY, f64::min);
            let hi = inputs.iter().map(|x| x[d]).fold(f64::NEG_INFINITY, f64::max);
            let span = if hi - lo > 1e-12 { hi - lo } else { 1.0 };
            lower.push((1e-3 * span).ln());
            upper.push((10.0 * span).ln());
            start_lower.push((0.05 * span).ln());
            start_upper.push((2.0 * span).ln());
        }
        lower.push(1e-8f64.ln());
        upper.push(var.max(1e-8 * 1.0001).ln());
        start_lower.push((1e-4 * var).max(1e-8).ln());
        start_upper.push((0.1 * var).max(2e-8).ln());
        HyperBounds {
            space: SearchSpace::new(lower, upper).expect("bounds are ordered by construction"),
            restarts: SearchSpace::new(start_lower, start_upper).expect("bounds are ordered by construction"),
        }
    }
}

/// Maximize the marginal likelihood from `init` plus `restarts - 1` random
/// starts drawn from the restart box of [`HyperBounds::from_data`]. Never returns something worse than `init`.
pub fn optimize_hyperparams<R: Rng + ?Sized>(
    inputs: &[Vec<f64>],
    targets: &[f64],
    init: &KernelHyperparams,
    restarts: usize,
    rng: &mut R,
) -> Result<KernelHyperparams> {
    optimize_hyperparams_shared(inputs, &[targets.to_vec()], init, restarts, rng)
}

/// As [`optimize_hyperparams`] for one set of hyperparameters shared by
/// several target vectors observed at the same inputs.
pub fn optimize_hyperparams_shared<R: Rng + ?Sized>(
    inputs: &[Vec<f64>],
    target_sets: &[Vec<f64>],
    init: &KernelHyperparams,
    restarts: usize,
    rng: &mut R,
) -> Result<KernelHyperparams> {
    if restarts == 0 {
        return Err(Error::contract("restarts must be at least 1"));
    }
    if target_sets.is_empty() {
        return Err(Error::contract("need at least one target vector"));
    }
    init.validate()?;
    let dim = init.dim();
    let mut flat = Vec::new();
    for t in target_sets {
        flat = flatten(inputs, t, dim)?;
    }
    let sets: Vec<&[f64]> = target_sets.iter().map(Vec::as_slice).collect();
    let pooled: Vec<f64> = target_sets.iter().flatten().copied().collect();
    let bounds = HyperBounds::from_data(inputs, &pooled);
    let init_value = nlml_shared(&flat, &sets, dim, init, false).map(|v| v.0).unwrap_or(f64::INFINITY);

    let objective = |logp: &[f64]| -> (f64, Vec<f64>) {
        let h = KernelHyperparams::from_log(logp);
        match nlml_shared(&flat, &sets, dim, &h, true) {
            Ok((v, g)) => (-v, g.into_iter().map(|x| -x).collect()),
            Err(_) => (f64::NEG_INFINITY, vec![0.0; dim + 2]),
        }
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    for r in 0..restarts {
        let start = if r == 0 { bounds.space.clamped(&init.to_log()) } else { bounds.restarts.sample_uniform(rng) };
        let out = lbfgs_refine_with_grad(objective, &start, &bounds.space, HYPER_LBFGS_ITERS)?;
        let value = -out.value;
        if value.is_finite() && best.as_ref().map_or(true, |b| value < b.0) {
            best = Some((value, out.x));
        }
    }
    match best {
        Some((value, logp)) if value <= init_value => {
            debug!("hyperparameters: nlml {init_value:.4} -> {value:.4}");
            Ok(KernelHyperparams::from_log(&logp))
        }
        _ => Ok(init.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::GpModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_observation_closed_form() {
        let h = KernelHyperparams::new(0.7, vec![1.0], 0.3).unwrap();
        let (v, _) = nlml(&[vec![0.2]], &[0.0], &h).unwrap();
        let prior_var: f64 = 1.0;
        assert!((v - 0.5 * (2.0 * std::f64::consts::PI * prior_var).ln()).abs() < 1e-12);
    }

    #[test]
    fn shared_likelihood_is_a_sum() {
        let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.2, (i * i) as f64 * 0.05]).collect();
        let ya: Vec<f64> = (0..6).map(|i| (i as f64).sin()).collect();
        let yb: Vec<f64> = (0..6).map(|i| (i as f64 * 0.5).cos()).collect();
        let h = KernelHyperparams::new(1.3, vec![0.4, 0.7], 0.05).unwrap();
        let (va, ga) = nlml(&xs, &ya, &h).unwrap();
        let (vb, gb) = nlml(&xs, &yb, &h).unwrap();
        let flat: Vec<f64> = xs.iter().flatten().copied().collect();
        let (v, g) = nlml_shared(&flat, &[&ya, &yb], 2, &h, true).unwrap();
        assert!((v - va - vb).abs() < 1e-10);
        for j in 0..4 {
            assert!((g[j] - ga[j] - gb[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_targets_push_signal_variance_down() {
        let xs: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.3]).collect();
        let h = KernelHyperparams::new(50.0, vec![0.5], 0.01).unwrap();
        let (_, g) = nlml(&xs, &[0.0; 5], &h).unwrap();
        assert!(g[0] > 0.0, "nlml must increase with log sf2, i.e. likelihood pushes it down: {g:?}");
    }

    #[test]
    fn recovers_generating_lengthscale() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth = KernelHyperparams::new(1.0, vec![0.2], 1e-3).unwrap();
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 39.0]).collect();
        let prior = GpModel::prior(truth.clone()).unwrap();
        let mut ys = prior.sample_posterior(&xs, 1, &mut rng).unwrap().remove(0);
        for y in ys.iter_mut() {
            *y += 0.03 * rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        let init = KernelHyperparams::new(1.0, vec![0.8], 0.05).unwrap();
        let fitted = optimize_hyperparams(&xs, &ys, &init, 3, &mut rng).unwrap();
        let ratio = fitted.lengthscales[0] / 0.2;
        assert!((0.5..=2.0).contains(&ratio), "{fitted:?}");
        let before = nlml(&xs, &ys, &init).unwrap().0;
        let after = nlml(&xs, &ys, &fitted).unwrap().0;
        assert!(after <= before);
    }

    #[test]
    fn restart_from_optimum_stays_put() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![(i as f64 * 0.37).sin(), i as f64 / 11.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x[0]).sin() + x[1]).collect();
        let init = KernelHyperparams::new(1.0, vec![0.5, 0.5], 0.01).unwrap();
        let opt = optimize_hyperparams(&xs, &ys, &init, 3, &mut rng).unwrap();
        let again = optimize_hyperparams(&xs, &ys, &opt, 1, &mut rng).unwrap();
        let (a, b) = (nlml(&xs, &ys, &opt).unwrap().0, nlml(&xs, &ys, &again).unwrap().0);
        assert!(b <= a && a - b < 1e-6, "{a} {b}");
    }
}
