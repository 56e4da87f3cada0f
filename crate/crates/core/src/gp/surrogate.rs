use rand::Rng;

use super::hyper::optimize_hyperparams_shared;
use super::kernel::KernelHyperparams;
use super::model::{GpModel, Prediction};
use crate::error::Result;
use crate::optim::SearchSpace;

/// GP in normalized coordinates: inputs mapped to the unit cube of `space`,
/// targets standardized to zero mean and unit variance. Predictions come back
/// in the original units.
#[derive(Debug, Clone)]
pub struct Surrogate {
    space: SearchSpace,
    y_mean: f64,
    y_scale: f64,
    model: GpModel,
}

/// Default starting point for normalized-space hyperparameters.
pub fn default_hyperparams(dim: usize) -> KernelHyperparams {
    KernelHyperparams::isotropic(dim, 1.0, 0.25, 1e-2).expect("positive constants")
}

fn standardize(targets: &[f64]) -> (f64, f64) {
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    (mean, scale)
}

impl Surrogate {
    /// Prior-only surrogate (no data yet).
    pub fn prior(space: SearchSpace, hyper: KernelHyperparams) -> Result<Self> {
        Ok(Surrogate { space, y_mean: 0.0, y_scale: 1.0, model: GpModel::prior(hyper)? })
    }

    pub fn fit(space: SearchSpace, inputs: &[Vec<f64>], targets: &[f64], hyper: &KernelHyperparams) -> Result<Self> {
        if inputs.is_empty() {
            return Self::prior(space, hyper.clone());
        }
        let (y_mean, y_scale) = standardize(targets);
        let unit: Vec<Vec<f64>> = inputs.iter().map(|x| space.to_unit(x)).collect();
        let ys: Vec<f64> = targets.iter().map(|y| (y - y_mean) / y_scale).collect();
        let model = GpModel::fit(&unit, &ys, hyper)?;
        Ok(Surrogate { space, y_mean, y_scale, model })
    }

    /// Marginal-likelihood fit of normalized-space hyperparameters.
    pub fn optimize<R: Rng + ?Sized>(
        space: &SearchSpace,
        inputs: &[Vec<f64>],
        targets: &[f64],
        init: &KernelHyperparams,
        restarts: usize,
        rng: &mut R,
    ) -> Result<KernelHyperparams> {
        if inputs.is_empty() {
            return Ok(init.clone());
        }
        Self::optimize_shared(space, inputs, &[targets.to_vec()], init, restarts, rng)
    }

    /// One set of hyperparameters for several target vectors at the same
    /// inputs, each standardized on its own.
    pub fn optimize_shared<R: Rng + ?Sized>(
        space: &SearchSpace,
        inputs: &[Vec<f64>],
        target_sets: &[Vec<f64>],
        init: &KernelHyperparams,
        restarts: usize,
        rng: &mut R,
    ) -> Result<KernelHyperparams> {
        if inputs.is_empty() {
            return Ok(init.clone());
        }
        let unit: Vec<Vec<f64>> = inputs.iter().map(|x| space.to_unit(x)).collect();
        let sets: Vec<Vec<f64>> = target_sets
            .iter()
            .map(|t| {
                let (m, s) = standardize(t);
                t.iter().map(|y| (y - m) / s).collect()
            })
            .collect();
        optimize_hyperparams_shared(&unit, &sets, init, restarts, rng)
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn model(&self) -> &GpModel {
        &self.model
    }

    pub fn into_model(self) -> GpModel {
        self.model
    }

    pub fn hyperparams(&self) -> &KernelHyperparams {
        self.model.hyperparams()
    }

    pub fn len(&self) -> usize {
        self.model.len()
    }

    pub fn is_empty(&self) -> bool {
        self.model.is_empty()
    }

    pub fn y_scale(&self) -> f64 {
        self.y_scale
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        self.space.to_unit(x)
    }

    /// Mean and standard deviation in original units.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        let p = self.model.predict(&self.space.to_unit(x))?;
        Ok((self.y_mean + self.y_scale * p.mean, self.y_scale * p.std()))
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        self.y_mean + self.y_scale * self.model.mean_unchecked(&self.space.to_unit(x))
    }

    /// Mean and its gradient in original units.
    pub fn mean_with_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let (m, g) = self.model.mean_with_grad_unchecked(&self.space.to_unit(x));
        let grad = g.iter().enumerate().map(|(j, v)| self.y_scale * v / self.space.width(j)).collect();
        (self.y_mean + self.y_scale * m, grad)
    }

    /// `(mean, std, d mean / dx, d std / dx)` in original units.
    pub fn predict_with_grad(&self, x: &[f64]) -> Result<(f64, f64, Vec<f64>, Vec<f64>)> {
        let (p, dm, dv): (Prediction, Vec<f64>, Vec<f64>) = self.model.predict_with_grad(&self.space.to_unit(x))?;
        let std = p.std();
        let dmean: Vec<f64> = dm.iter().enumerate().map(|(j, g)| self.y_scale * g / self.space.width(j)).collect();
        let dstd: Vec<f64> = dv
            .iter()
            .enumerate()
            .map(|(j, g)| if std > 1e-12 { self.y_scale * g / (2.0 * std) / self.space.width(j) } else { 0.0 })
            .collect();
        Ok((self.y_mean + self.y_scale * p.mean, self.y_scale * std, dmean, dstd))
    }

    /// Condition on `(x, y)` with the standardization constants frozen.
    pub fn fantasize(&self, x: &[f64], y: f64) -> Result<Self> {
        let model = self.model.fantasize(&self.space.to_unit(x), (y - self.y_mean) / self.y_scale)?;
        Ok(Surrogate { space: self.space.clone(), y_mean: self.y_mean, y_scale: self.y_scale, model })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_rows_predict_their_average() {
        let space = SearchSpace::new(vec![0.0], vec![1.0]).unwrap();
        let h = KernelHyperparams::new(1.0, vec![0.3], 0.1).unwrap();
        let s = Surrogate::fit(space, &[vec![0.4], vec![0.4]], &[0.0, 2.0], &h).unwrap();
        assert!((s.predict(&[0.4]).unwrap().0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mean_gradient_matches_full_prediction() {
        let space = SearchSpace::new(vec![-1.0, 2.0], vec![3.0, 4.0]).unwrap();
        let h = KernelHyperparams::new(1.0, vec![0.3, 0.4], 0.01).unwrap();
        let xs = vec![vec![0.0, 2.5], vec![1.0, 3.0], vec![2.5, 3.9]];
        let s = Surrogate::fit(space, &xs, &[1.0, -2.0, 0.5], &h).unwrap();
        let (m, g) = s.mean_with_grad(&[0.7, 3.2]);
        let (m2, _, g2, _) = s.predict_with_grad(&[0.7, 3.2]).unwrap();
        assert!((m - m2).abs() < 1e-12);
        assert!(g.iter().zip(&g2).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn raw_gradients_match_finite_differences() {
        let space = SearchSpace::new(vec![-5.0, 0.0], vec![5.0, 2.0]).unwrap();
        let h = KernelHyperparams::new(1.0, vec![0.3, 0.5], 1e-3).unwrap();
        let xs = vec![vec![-2.0, 0.5], vec![1.0, 1.5], vec![3.0, 0.2]];
        let s = Surrogate::fit(space, &xs, &[-3.0, -1.0, -5.0], &h).unwrap();
        let x = [0.3, 0.9];
        let (_, _, dm, ds) = s.predict_with_grad(&x).unwrap();
        for j in 0..2 {
            let e = 1e-6;
            let mut a = x;
            let mut b = x;
            a[j] += e;
            b[j] -= e;
            let (pa, pb) = (s.predict(&a).unwrap(), s.predict(&b).unwrap());
            assert!(((pa.0 - pb.0) / (2.0 * e) - dm[j]).abs() < 1e-5);
            assert!(((pa.1 - pb.1) / (2.0 * e) - ds[j]).abs() < 1e-5);
        }
    }

    #[test]
    fn empty_surrogate_is_flat_prior() {
        let space = SearchSpace::cube(3, 0.0, 1.0).unwrap();
        let s = Surrogate::fit(space, &[], &[], &default_hyperparams(3)).unwrap();
        assert_eq!(s.predict(&[0.1, 0.9, 0.5]).unwrap(), (0.0, 1.0));
    }
}
