use rand::Rng;
use rand_distr::StandardNormal;

use super::kernel::KernelHyperparams;
use super::linalg::Cholesky;
use crate::error::{Error, Result};

/// Posterior mean and latent (noise-free) variance at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn std(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// Exact zero-mean GP posterior with a cached Cholesky factor.
///
/// Immutable once built; [`GpModel::fantasize`] returns a new model.
#[derive(Debug, Clone)]
pub struct GpModel {
    dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    hyper: KernelHyperparams,
    chol: Cholesky,
    alpha: Vec<f64>,
    jitter: f64,
}

fn check_point(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::contract(format!("point has dimension {}, model expects {dim}", x.len())));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::contract("non-finite input"));
    }
    Ok(())
}

impl GpModel {
    /// Prior-only model: no data, predictions are `(0, signal_variance)`.
    pub fn prior(hyper: KernelHyperparams) -> Result<Self> {
        hyper.validate()?;
        Ok(GpModel {
            dim: hyper.dim(),
            inputs: Vec::new(),
            targets: Vec::new(),
            hyper,
            chol: Cholesky::empty(),
            alpha: Vec::new(),
            jitter: 0.0,
        })
    }

    pub fn fit(inputs: &[Vec<f64>], targets: &[f64], hyper: &KernelHyperparams) -> Result<Self> {
        hyper.validate()?;
        if inputs.is_empty() {
            return Err(Error::contract("fit needs at least one observation"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::contract(format!("{} inputs vs {} targets", inputs.len(), targets.len())));
        }
        let dim = hyper.dim();
        for x in inputs {
            check_point(x, dim)?;
        }
        if !targets.iter().all(|y| y.is_finite()) {
            return Err(Error::contract("non-finite target"));
        }
        let flat: Vec<f64> = inputs.iter().flatten().copied().collect();
        Self::from_flat(dim, flat, targets.to_vec(), hyper.clone())
    }

    fn from_flat(dim: usize, inputs: Vec<f64>, targets: Vec<f64>, hyper: KernelHyperparams) -> Result<Self> {
        let n = targets.len();
        let k = gram(&inputs, dim, &hyper);
        let (chol, jitter) = Cholesky::factor_with_jitter(&k, n)?;
        let alpha = chol.solve(&targets);
        Ok(GpModel { dim, inputs, targets, hyper, chol, alpha, jitter })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn hyperparams(&self) -> &KernelHyperparams {
        &self.hyper
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    /// Diagonal jitter that was needed to factor the training covariance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Prior covariance between `x` and every training input.
    pub fn cross_cov(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|i| self.hyper.eval(self.input(i), x)).collect()
    }

    /// `L^{-1} k(X, x)`, the whitened cross-covariance.
    pub fn whitened(&self, x: &[f64]) -> Vec<f64> {
        self.chol.solve_lower(&self.cross_cov(x))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        check_point(x, self.dim)?;
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> Prediction {
        if self.is_empty() {
            return Prediction { mean: 0.0, variance: self.hyper.signal_variance };
        }
        let k = self.cross_cov(x);
        let mean = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = self.chol.solve_lower(&k);
        let variance = (self.hyper.signal_variance - v.iter().map(|t| t * t).sum::<f64>()).max(0.0);
        Prediction { mean, variance }
    }

    /// Posterior mean only; O(N d).
    pub(crate) fn mean_unchecked(&self, x: &[f64]) -> f64 {
        (0..self.len()).map(|i| self.alpha[i] * self.hyper.eval(self.input(i), x)).sum()
    }

    /// Posterior mean and its gradient; O(N d).
    pub(crate) fn mean_with_grad_unchecked(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d = self.dim;
        let mut grad = vec![0.0; d];
        let mut mean = 0.0;
        for i in 0..self.len() {
            let xi = self.input(i);
            let wk = self.alpha[i] * self.hyper.eval(xi, x);
            mean += wk;
            for j in 0..d {
                grad[j] -= wk * (x[j] - xi[j]) / (self.hyper.lengthscales[j] * self.hyper.lengthscales[j]);
            }
        }
        (mean, grad)
    }

    /// Prediction together with gradients of mean and variance w.r.t. `x`.
    pub fn predict_with_grad(&self, x: &[f64]) -> Result<(Prediction, Vec<f64>, Vec<f64>)> {
        check_point(x, self.dim)?;
        let d = self.dim;
        if self.is_empty() {
            return Ok((self.predict_unchecked(x), vec![0.0; d], vec![0.0; d]));
        }
        let k = self.cross_cov(x);
        let kinv_k = self.chol.solve(&k);
        let mut dmean = vec![0.0; d];
        let mut dvar = vec![0.0; d];
        for i in 0..self.len() {
            let xi = self.input(i);
            for j in 0..d {
                let dk = -k[i] * (x[j] - xi[j]) / (self.hyper.lengthscales[j] * self.hyper.lengthscales[j]);
                dmean[j] += self.alpha[i] * dk;
                dvar[j] -= 2.0 * kinv_k[i] * dk;
            }
        }
        let mean = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let raw_var = self.hyper.signal_variance - k.iter().zip(&kinv_k).map(|(a, b)| a * b).sum::<f64>();
        if raw_var <= 0.0 {
            dvar.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok((Prediction { mean, variance: raw_var.max(0.0) }, dmean, dvar))
    }

    /// Condition on one more observation `(x, y)` with unchanged hyperparameters,
    /// extending the cached factor in O(N^2).
    pub fn fantasize(&self, x: &[f64], y: f64) -> Result<GpModel> {
        check_point(x, self.dim)?;
        if !y.is_finite() {
            return Err(Error::contract("non-finite fantasy target"));
        }
        let mut inputs = self.inputs.clone();
        inputs.extend_from_slice(x);
        let mut targets = self.targets.clone();
        targets.push(y);
        let diag = self.hyper.signal_variance + self.hyper.noise_variance + self.jitter;
        match self.chol.extend(&self.cross_cov(x), diag) {
            Some(chol) => {
                let alpha = chol.solve(&targets);
                Ok(GpModel { dim: self.dim, inputs, targets, hyper: self.hyper.clone(), chol, alpha, jitter: self.jitter })
            }
            None => Self::from_flat(self.dim, inputs, targets, self.hyper.clone()),
        }
    }

    /// Joint posterior over a set of points (mean vector and covariance factor).
    pub fn joint_posterior(&self, points: &[Vec<f64>]) -> Result<JointPosterior> {
        if points.is_empty() {
            return Err(Error::contract("joint posterior needs at least one point"));
        }
        for p in points {
            check_point(p, self.dim)?;
        }
        let m = points.len();
        let whitened: Vec<Vec<f64>> = points.iter().map(|p| self.whitened(p)).collect();
        let mean: Vec<f64> = points.iter().map(|p| self.mean_unchecked(p)).collect();
        let mut cov = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..=a {
                let prior = self.hyper.eval(&points[a], &points[b]);
                let reduce: f64 = whitened[a].iter().zip(&whitened[b]).map(|(u, v)| u * v).sum();
                let c = prior - reduce;
                cov[a * m + b] = c;
                cov[b * m + a] = c;
            }
        }
        let chol = factor_posterior(&cov, m, self.hyper.signal_variance)?;
        Ok(JointPosterior { mean, cov, chol })
    }

    /// `k` joint draws of the latent function at `points`.
    pub fn sample_posterior<R: Rng + ?Sized>(&self, points: &[Vec<f64>], k: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        if k == 0 {
            return Err(Error::contract("draw count must be at least 1"));
        }
        let joint = self.joint_posterior(points)?;
        Ok((0..k).map(|_| joint.sample(rng)).collect())
    }
}

/// Posterior covariances can be exactly singular (test points on noise-free
/// data), so the jitter floor is tied to the prior scale rather than the trace.
fn factor_posterior(cov: &[f64], m: usize, prior_scale: f64) -> Result<Cholesky> {
    if let Some(c) = Cholesky::factor(cov, m, 0.0) {
        return Ok(c);
    }
    let trace: f64 = (0..m).map(|i| cov[i * m + i]).sum::<f64>();
    let base = (trace / m as f64).max(1e-6 * prior_scale);
    let levels: Vec<f64> = (0..7).map(|k| base * 1e-10 * 10f64.powi(k)).collect();
    for &j in &levels {
        if let Some(c) = Cholesky::factor(cov, m, j) {
            return Ok(c);
        }
    }
    Err(Error::Factorization { attempted: levels })
}

/// Gaussian over a finite point set.
#[derive(Debug, Clone)]
pub struct JointPosterior {
    pub mean: Vec<f64>,
    /// Row-major covariance.
    pub cov: Vec<f64>,
    pub chol: Cholesky,
}

impl JointPosterior {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.len()).map(|_| rng.sample(StandardNormal)).collect();
        self.chol.mul_lower(&z).into_iter().zip(&self.mean).map(|(a, b)| a + b).collect()
    }
}

/// Training covariance `K + noise I`, row-major.
pub(crate) fn gram(inputs: &[f64], dim: usize, h: &KernelHyperparams) -> Vec<f64> {
    let n = inputs.len() / dim.max(1);
    let n = if dim == 0 { 0 } else { n };
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        let xi = &inputs[i * dim..(i + 1) * dim];
        for j in 0..i {
            let v = h.eval(xi, &inputs[j * dim..(j + 1) * dim]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
        k[i * n + i] = h.signal_variance + h.noise_variance;
    }
    k
}
