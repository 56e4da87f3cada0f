//! Contextual relative entropy policy search with a linear-Gaussian policy
//! over squared context features.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{lbfgs_refine_with_grad, SearchSpace};

/// Floor added to the refitted covariance.
pub const COVARIANCE_FLOOR: f64 = 1e-6;
const LOG_ETA_BOUNDS: (f64, f64) = (-9.210_340_371_976_182, 9.210_340_371_976_182); // ln 1e-4, ln 1e4
const V_BOUND: f64 = 1e3;
const DUAL_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrepsConfig {
    /// Bound on the KL divergence between the weighting and the sampling distribution.
    pub epsilon: f64,
    /// Episodes between updates; each update uses the last `update_period` samples.
    pub update_period: usize,
}

impl Default for CrepsConfig {
    fn default() -> Self {
        CrepsConfig { epsilon: 0.5, update_period: 30 }
    }
}

/// `theta ~ N(gain * phi(s), cov)` with `phi(s) = [1, u, u*u]` and `u` the
/// context mapped to the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrepsPolicy {
    pub context_space: SearchSpace,
    pub param_space: SearchSpace,
    /// `dim(theta)` rows of `feature_dim` entries.
    pub gain: Vec<Vec<f64>>,
    /// Row-major `dim(theta) x dim(theta)`.
    pub cov: Vec<f64>,
}

/// Result of one policy update.
#[derive(Debug, Clone, PartialEq)]
pub struct CrepsUpdate {
    pub policy: CrepsPolicy,
    pub eta: f64,
    /// Normalized sample weights.
    pub weights: Vec<f64>,
    /// `sum p log(N p)` of the normalized weights.
    pub kl: f64,
    /// The dual failed and the previous policy was kept.
    pub diverged: bool,
}

pub fn feature_dim(context_dim: usize) -> usize {
    1 + 2 * context_dim
}

impl CrepsPolicy {
    /// Mean at the parameter box center for every context, per-axis standard
    /// deviation a quarter of the box width.
    pub fn initial(context_space: SearchSpace, param_space: SearchSpace) -> Self {
        let p = param_space.dim();
        let f = feature_dim(context_space.dim());
        let center = param_space.center();
        let gain = (0..p)
            .map(|i| {
                let mut row = vec![0.0; f];
                row[0] = center[i];
                row
            })
            .collect();
        let mut cov = vec![0.0; p * p];
        for i in 0..p {
            cov[i * p + i] = param_space.width(i).powi(2) / 16.0;
        }
        CrepsPolicy { context_space, param_space, gain, cov }
    }

    pub fn features(&self, context: &[f64]) -> Vec<f64> {
        let u = self.context_space.to_unit(context);
        let mut phi = Vec::with_capacity(feature_dim(u.len()));
        phi.push(1.0);
        phi.extend_from_slice(&u);
        phi.extend(u.iter().map(|v| v * v));
        phi
    }

    /// Unclamped policy mean.
    pub fn raw_mean(&self, context: &[f64]) -> Vec<f64> {
        let phi = self.features(context);
        self.gain.iter().map(|row| row.iter().zip(&phi).map(|(a, b)| a * b).sum()).collect()
    }

    /// Policy mean clamped into the parameter box.
    pub fn mean(&self, context: &[f64]) -> Vec<f64> {
        self.param_space.clamped(&self.raw_mean(context))
    }

    /// Draw parameters; samples outside the box are clamped.
    pub fn sample<R: Rng + ?Sized>(&self, context: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let p = self.param_space.dim();
        let chol = DMatrix::from_row_slice(p, p, &self.cov)
            .cholesky()
            .ok_or_else(|| Error::Numerical("policy covariance is not positive definite".into()))?;
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let step = chol.l() * z;
        let mean = self.raw_mean(context);
        let theta: Vec<f64> = mean.iter().zip(step.iter()).map(|(m, s)| m + s).collect();
        Ok(self.param_space.clamped(&theta))
    }
}

/// Dual `g(eta, v) = eta eps + v . mean(phi) + eta log mean exp((R - v . phi) / eta)`
/// and its gradient with respect to `(eta, v)`.
pub fn creps_dual(rewards: &[f64], features: &[Vec<f64>], epsilon: f64, eta: f64, v: &[f64]) -> (f64, Vec<f64>) {
    let n = rewards.len() as f64;
    let f = v.len();
    let adv: Vec<f64> = rewards
        .iter()
        .zip(features)
        .map(|(r, phi)| r - phi.iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let top = adv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = adv.iter().map(|a| ((a - top) / eta).exp()).collect();
    let total: f64 = ex.iter().sum();
    let lse = top / eta + (total / n).ln();
    let mut mean_phi = vec![0.0; f];
    let mut weighted_phi = vec![0.0; f];
    let mut weighted_adv = 0.0;
    for ((phi, e), a) in features.iter().zip(&ex).zip(&adv) {
        let p = e / total;
        for j in 0..f {
            mean_phi[j] += phi[j] / n;
            weighted_phi[j] += p * phi[j];
        }
        weighted_adv += p * a;
    }
    let value = eta * epsilon + v.iter().zip(&mean_phi).map(|(a, b)| a * b).sum::<f64>() + eta * lse;
    let mut grad = Vec::with_capacity(f + 1);
    grad.push(epsilon + lse - weighted_adv / eta);
    grad.extend(mean_phi.iter().zip(&weighted_phi).map(|(m, w)| m - w));
    (value, grad)
}

fn normalized_weights(rewards: &[f64], features: &[Vec<f64>], eta: f64, v: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = rewards
        .iter()
        .zip(features)
        .map(|(r, phi)| (r - phi.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()) / eta)
        .collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = ex.iter().sum();
    ex.into_iter().map(|e| e / total).collect()
}

/// `sum p log(N p)`, the KL divergence from uniform of normalized weights.
pub fn weight_kl(p: &[f64]) -> f64 {
    let n = p.len() as f64;
    p.iter().filter(|&&w| w > 0.0).map(|w| w * (n * w).ln()).sum()
}

/// One C-REPS step on a batch of `(context, theta, reward)` samples.
pub fn creps_update(batch: &[(Vec<f64>, Vec<f64>, f64)], policy: &CrepsPolicy, epsilon: f64) -> Result<CrepsUpdate> {
    let fdim = feature_dim(policy.context_space.dim());
    if batch.len() < fdim + 1 {
        return Err(Error::contract(format!("batch of {} is smaller than feature dimension + 1 = {}", batch.len(), fdim + 1)));
    }
    if !(epsilon > 0.0) {
        return Err(Error::contract("epsilon must be positive"));
    }
    if batch.iter().any(|(_, _, r)| !r.is_finite()) {
        return Err(Error::contract("non-finite reward in batch"));
    }
    let n = batch.len();
    let features: Vec<Vec<f64>> = batch.iter().map(|(s, _, _)| policy.features(s)).collect();
    let raw: Vec<f64> = batch.iter().map(|b| b.2).collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let sd = (raw.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64).sqrt();

    let (eta, weights) = if sd < 1e-12 {
        (f64::INFINITY, vec![1.0 / n as f64; n])
    } else {
        let rewards: Vec<f64> = raw.iter().map(|r| (r - mean) / sd).collect();
        let mut lower = vec![LOG_ETA_BOUNDS.0];
        let mut upper = vec![LOG_ETA_BOUNDS.1];
        lower.extend(std::iter::repeat(-V_BOUND).take(fdim));
        upper.extend(std::iter::repeat(V_BOUND).take(fdim));
        let space = SearchSpace::new(lower, upper)?;
        let objective = |x: &[f64]| {
            let eta = x[0].exp();
            let (g, grad) = creps_dual(&rewards, &features, epsilon, eta, &x[1..]);
            let mut neg: Vec<f64> = grad.iter().map(|v| -v).collect();
            neg[0] *= eta;
            (-g, neg)
        };
        let out = lbfgs_refine_with_grad(objective, &vec![0.0; fdim + 1], &space, DUAL_ITERS)?;
        let eta = out.x[0].exp();
        let v = &out.x[1..];
        if !out.value.is_finite() || !eta.is_finite() || v.iter().any(|x| !x.is_finite()) {
            warn!("C-REPS dual diverged; keeping the previous policy");
            return Ok(CrepsUpdate {
                policy: policy.clone(),
                eta,
                weights: vec![1.0 / n as f64; n],
                kl: 0.0,
                diverged: true,
            });
        }
        // The KL of the weights falls monotonically with eta; if the inexact
        // dual solution overshoots the bound, raise eta until it holds.
        let mut eta = eta;
        let mut w = normalized_weights(&rewards, &features, eta, v);
        if weight_kl(&w) > epsilon {
            let (mut lo, mut hi) = (eta, eta);
            while weight_kl(&normalized_weights(&rewards, &features, hi, v)) > epsilon {
                hi *= 2.0;
            }
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if weight_kl(&normalized_weights(&rewards, &features, mid, v)) > epsilon {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-10 * hi {
                    break;
                }
            }
            eta = hi;
            w = normalized_weights(&rewards, &features, eta, v);
        }
        (eta, w)
    };

    let policy = weighted_refit(batch, &features, &weights, policy)?;
    let kl = weight_kl(&weights);
    Ok(CrepsUpdate { policy, eta, weights, kl, diverged: false })
}

fn weighted_refit(
    batch: &[(Vec<f64>, Vec<f64>, f64)],
    features: &[Vec<f64>],
    weights: &[f64],
    previous: &CrepsPolicy,
) -> Result<CrepsPolicy> {
    let n = batch.len();
    let f = features[0].len();
    let p = previous.param_space.dim();
    let phi = DMatrix::from_fn(n, f, |i, j| features[i][j]);
    let theta = DMatrix::from_fn(n, p, |i, j| batch[i].1[j]);
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(weights));
    let mut gram = phi.transpose() * &d * &phi;
    let ridge = 1e-8 * gram.trace().max(1e-300) / f as f64;
    for i in 0..f {
        gram[(i, i)] += ridge;
    }
    let rhs = phi.transpose() * &d * &theta;
    let solved = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("weighted least squares is singular".into()))?
        .solve(&rhs);
    let gain: Vec<Vec<f64>> = (0..p).map(|i| (0..f).map(|j| solved[(j, i)]).collect()).collect();
    let resid = theta - &phi * &solved;
    let total: f64 = weights.iter().sum();
    let mut cov = vec![0.0; p * p];
    for k in 0..n {
        for i in 0..p {
            for j in 0..p {
                cov[i * p + j] += weights[k] * resid[(k, i)] * resid[(k, j)] / total;
            }
        }
    }
    for i in 0..p {
        cov[i * p + i] += COVARIANCE_FLOOR;
    }
    Ok(CrepsPolicy { context_space: previous.context_space.clone(), param_space: previous.param_space.clone(), gain, cov })
}
