//! Projected L-BFGS for box-constrained maximization.
//!
//! Ten correction pairs, Armijo backtracking along the projected path.
//! Variables sitting on a bound whose gradient points outward are frozen
//! for the iteration.

use std::collections::VecDeque;

use super::SearchSpace;
use crate::error::{Error, Result};

pub const LBFGS_MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 50;
const PG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Central finite-difference gradient with per-axis step `1e-6 * width`,
/// using one-sided points where the stencil would cross a bound.
pub fn fd_gradient<F>(f: &mut F, x: &[f64], space: &SearchSpace) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * space.width(i);
        let hi = (x[i] + h).min(space.upper()[i]);
        let lo = (x[i] - h).max(space.lower()[i]);
        probe[i] = hi;
        let fp = f(&probe);
        probe[i] = lo;
        let fm = f(&probe);
        probe[i] = x[i];
        g[i] = (fp - fm) / (hi - lo);
    }
    g
}

trait Objective {
    fn value(&mut self, x: &[f64]) -> f64;
    fn gradient(&mut self, x: &[f64]) -> Vec<f64>;
}

struct FiniteDiff<'a, F> {
    f: F,
    space: &'a SearchSpace,
}

impl<F: FnMut(&[f64]) -> f64> Objective for FiniteDiff<'_, F> {
    fn value(&mut self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn gradient(&mut self, x: &[f64]) -> Vec<f64> {
        fd_gradient(&mut self.f, x, self.space)
    }
}

struct Analytic<F> {
    fg: F,
    last: Option<(Vec<f64>, Vec<f64>)>,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> Objective for Analytic<F> {
    fn value(&mut self, x: &[f64]) -> f64 {
        let (v, g) = (self.fg)(x);
        self.last = Some((x.to_vec(), g));
        v
    }

    fn gradient(&mut self, x: &[f64]) -> Vec<f64> {
        match self.last.take() {
            Some((p, g)) if p == x => g,
            _ => (self.fg)(x).1,
        }
    }
}

/// Refine `x0` with gradients from central finite differences.
pub fn lbfgs_refine<F>(f: F, x0: &[f64], space: &SearchSpace, max_iters: usize) -> Result<LocalOutcome>
where
    F: FnMut(&[f64]) -> f64,
{
    lbfgs_core(&mut FiniteDiff { f, space }, x0, space, max_iters)
}

/// Refine `x0` using a closure returning `(value, gradient)`.
pub fn lbfgs_refine_with_grad<F>(fg: F, x0: &[f64], space: &SearchSpace, max_iters: usize) -> Result<LocalOutcome>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    lbfgs_core(&mut Analytic { fg, last: None }, x0, space, max_iters)
}

fn lbfgs_core(obj: &mut dyn Objective, x0: &[f64], space: &SearchSpace, max_iters: usize) -> Result<LocalOutcome> {
    let n = space.dim();
    if x0.len() != n {
        return Err(Error::contract(format!("x0 has {} entries, space has {n}", x0.len())));
    }
    if !space.contains(x0) {
        return Err(Error::contract("x0 outside the search box"));
    }
    // Minimize h = -f; `grad` below is the gradient of h.
    let mut x = x0.to_vec();
    let mut h = -obj.value(&x);
    if !h.is_finite() {
        return Ok(LocalOutcome { x, value: -h, iterations: 0 });
    }
    let mut grad: Vec<f64> = obj.gradient(&x).into_iter().map(|g| -g).collect();
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(LBFGS_MEMORY);
    let mut iterations = 0;

    for _ in 0..max_iters {
        let blocked: Vec<bool> = (0..n)
            .map(|i| (x[i] <= space.lower()[i] && grad[i] > 0.0) || (x[i] >= space.upper()[i] && grad[i] < 0.0))
            .collect();
        let pg: Vec<f64> = (0..n).map(|i| if blocked[i] { 0.0 } else { grad[i] }).collect();
        if !grad.iter().all(|g| g.is_finite()) || pg.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= PG_TOL {
            break;
        }

        let mut dir = two_loop(&memory, &pg);
        for i in 0..n {
            if blocked[i] {
                dir[i] = 0.0;
            }
        }
        let slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
        if !(slope < 0.0) {
            memory.clear();
            dir = pg.iter().map(|g| -g).collect();
        }
        let mut step = if memory.is_empty() {
            // First step moves at most a tenth of the box diagonal.
            let dn = norm(&dir);
            let diag = (0..n).map(|i| space.width(i).powi(2)).sum::<f64>().sqrt();
            (0.1 * diag / dn).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            space.clamp(&mut trial);
            let decrease: f64 = grad.iter().zip(trial.iter().zip(&x)).map(|(g, (t, xi))| g * (t - xi)).sum();
            if decrease < 0.0 {
                let ht = -obj.value(&trial);
                if ht.is_finite() && ht <= h + ARMIJO_C1 * decrease {
                    accepted = Some((trial, ht));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, h_new)) = accepted else {
            break;
        };
        let g_new: Vec<f64> = obj.gradient(&x_new).into_iter().map(|g| -g).collect();
        iterations += 1;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let improvement = h - h_new;
        x = x_new;
        h = h_new;
        grad = g_new;
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if memory.len() == LBFGS_MEMORY {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        if improvement <= 1e-16 * (1.0 + h.abs()) {
            break;
        }
    }
    Ok(LocalOutcome { x, value: -h, iterations })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn two_loop(memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, grad: &[f64]) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * s.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>();
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = memory.back() {
        let gamma = s.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / y.iter().map(|a| a * a).sum::<f64>();
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>();
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concave_quadratic_converges_quickly() {
        let space = SearchSpace::cube(4, -5.0, 5.0).unwrap();
        let c = [1.0, -2.0, 0.5, 3.0];
        let out = lbfgs_refine(|x| -x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), &[-4.0, 4.0, 0.0, -1.0], &space, 50)
            .unwrap();
        for (a, b) in out.x.iter().zip(&c) {
            assert!((a - b).abs() < 1e-6, "{:?}", out);
        }
        assert!(out.iterations <= 50);
    }

    #[test]
    fn analytic_gradient_path() {
        let space = SearchSpace::cube(2, -1.0, 1.0).unwrap();
        let out = lbfgs_refine_with_grad(
            |x| {
                let v = -(x[0] - 0.2).powi(2) - 4.0 * (x[1] + 0.3).powi(2);
                (v, vec![-2.0 * (x[0] - 0.2), -8.0 * (x[1] + 0.3)])
            },
            &[0.9, 0.9],
            &space,
            50,
        )
        .unwrap();
        assert!((out.x[0] - 0.2).abs() < 1e-6 && (out.x[1] + 0.3).abs() < 1e-6);
    }

    #[test]
    fn stationary_start_is_returned() {
        let space = SearchSpace::cube(2, -1.0, 1.0).unwrap();
        let out = lbfgs_refine(|x| -(x[0] * x[0] + x[1] * x[1]), &[0.0, 0.0], &space, 100).unwrap();
        assert_eq!(out.x, vec![0.0, 0.0]);
    }

    #[test]
    fn boundary_maximum_matches_grid() {
        let space = SearchSpace::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let f = |x: &[f64]| -(x[0] - 1.7).powi(2) - (x[1] - 0.4).powi(2) + 0.3 * x[0] * x[1];
        let out = lbfgs_refine(f, &[0.2, 0.2], &space, 100).unwrap();
        let mut grid_best = f64::NEG_INFINITY;
        for i in 0..=1000 {
            for j in 0..=1000 {
                grid_best = grid_best.max(f(&[i as f64 / 1000.0, j as f64 / 1000.0]));
            }
        }
        assert!((out.value - grid_best).abs() < 1e-3, "{} vs {}", out.value, grid_best);
        assert!((out.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn never_worse_than_start() {
        let space = SearchSpace::cube(2, -3.0, 3.0).unwrap();
        let f = |x: &[f64]| (3.0 * x[0]).sin() * (2.0 * x[1]).cos() - 0.1 * x[0] * x[0];
        for k in 0..20 {
            let x0 = [-3.0 + 0.3 * k as f64, 3.0 - 0.29 * k as f64];
            let out = lbfgs_refine(f, &x0, &space, 100).unwrap();
            assert!(out.value >= f(&x0) - 1e-12);
            assert!(space.contains(&out.x));
        }
    }
}
