use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Squared-exponential ARD hyperparameters.
///
/// `k(x, x') = signal_variance * exp(-0.5 * sum_d ((x_d - x'_d) / l_d)^2)`,
/// plus `noise_variance` on the diagonal of the training covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelHyperparams {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub noise_variance: f64,
}

impl KernelHyperparams {
    pub fn new(signal_variance: f64, lengthscales: Vec<f64>, noise_variance: f64) -> Result<Self> {
        let h = KernelHyperparams { signal_variance, lengthscales, noise_variance };
        h.validate()?;
        Ok(h)
    }

    /// Same lengthscale on every axis.
    pub fn isotropic(dim: usize, signal_variance: f64, lengthscale: f64, noise_variance: f64) -> Result<Self> {
        Self::new(signal_variance, vec![lengthscale; dim], noise_variance)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.signal_variance) || !ok(self.noise_variance) || !self.lengthscales.iter().all(|l| ok(*l)) {
            return Err(Error::contract(format!("hyperparameters must be finite and positive: {self:?}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// `[log sf2, log l_1, ..., log l_d, log sn2]`
    pub fn to_log(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim() + 2);
        v.push(self.signal_variance.ln());
        v.extend(self.lengthscales.iter().map(|l| l.ln()));
        v.push(self.noise_variance.ln());
        v
    }

    pub fn from_log(v: &[f64]) -> Self {
        let d = v.len() - 2;
        KernelHyperparams {
            signal_variance: v[0].exp(),
            lengthscales: v[1..=d].iter().map(|l| l.exp()).collect(),
            noise_variance: v[d + 1].exp(),
        }
    }

    /// Kernel value without dimension checks.
    #[inline]
    pub(crate) fn eval(&self, x: &[f64], x2: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for ((a, b), l) in x.iter().zip(x2).zip(&self.lengthscales) {
            let t = (a - b) / l;
            r2 += t * t;
        }
        self.signal_variance * (-0.5 * r2).exp()
    }
}

/// Squared-exponential kernel between two points.
pub fn kernel_eval(x: &[f64], x2: &[f64], h: &KernelHyperparams) -> Result<f64> {
    if x.len() != h.dim() || x2.len() != h.dim() {
        return Err(Error::contract(format!(
            "kernel inputs of dimension {} and {} against {} lengthscales",
            x.len(),
            x2.len(),
            h.dim()
        )));
    }
    Ok(h.eval(x, x2))
}
