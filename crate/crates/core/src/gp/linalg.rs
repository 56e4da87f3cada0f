//! Dense lower-triangular Cholesky factor in row-major packed-square storage.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    /// Row-major `n * n`; only the lower triangle is meaningful.
    l: Vec<f64>,
}

/// Jitter schedule: start at `1e-10 * trace / n`, multiply by ten up to `1e-4 * trace / n`.
pub fn jitter_levels(trace: f64, n: usize) -> Vec<f64> {
    let base = (trace / n.max(1) as f64).max(f64::MIN_POSITIVE);
    (0..7).map(|k| base * 1e-10 * 10f64.powi(k)).collect()
}

impl Cholesky {
    pub fn empty() -> Self {
        Cholesky { n: 0, l: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    /// Factor a symmetric matrix (row-major, `n * n`), adding `jitter` to the diagonal.
    pub fn factor(a: &[f64], n: usize, jitter: f64) -> Option<Self> {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                for k in 0..j {
                    s -= ri[k] * rj[k];
                }
                if i == j {
                    let d = s + jitter;
                    if !(d > 0.0) || !d.is_finite() {
                        return None;
                    }
                    l[i * n + i] = d.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Cholesky { n, l })
    }

    /// Factor with the escalating jitter policy. Returns the factor and the jitter used.
    pub fn factor_with_jitter(a: &[f64], n: usize) -> Result<(Self, f64)> {
        if let Some(c) = Self::factor(a, n, 0.0) {
            return Ok((c, 0.0));
        }
        let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
        let levels = jitter_levels(trace.abs(), n);
        for &j in &levels {
            if let Some(c) = Self::factor(a, n, j) {
                return Ok((c, j));
            }
        }
        Err(Error::Factorization { attempted: levels })
    }

    /// Solve `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let mut s = x[i];
            for (k, lik) in row.iter().enumerate() {
                s -= lik * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }

    /// Solve `L^T x = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.l[i * n + i];
            let xi = x[i];
            let row = &self.l[i * n..i * n + i];
            for (k, lik) in row.iter().enumerate() {
                x[k] -= lik * xi;
            }
        }
        x
    }

    /// Solve `(L L^T) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
    }

    /// Full inverse of `L L^T`, row-major.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        // L^{-1} column by column, then inv = L^{-T} L^{-1}.
        let mut linv = vec![0.0; n * n];
        for c in 0..n {
            for i in c..n {
                let mut s = if i == c { 1.0 } else { 0.0 };
                for k in c..i {
                    s -= self.l[i * n + k] * linv[k * n + c];
                }
                linv[i * n + c] = s / self.l[i * n + i];
            }
        }
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in i..n {
                    s += linv[k * n + i] * linv[k * n + j];
                }
                inv[i * n + j] = s;
                inv[j * n + i] = s;
            }
        }
        inv
    }

    /// Append one row/column: `cross` is the new column's covariance with the
    /// existing points (length n) and `diag` its own variance. Returns `None`
    /// when the extended matrix is not numerically positive definite.
    pub fn extend(&self, cross: &[f64], diag: f64) -> Option<Self> {
        let n = self.n;
        let row = self.solve_lower(cross);
        let d2 = diag - row.iter().map(|v| v * v).sum::<f64>();
        if !(d2 > 0.0) || !d2.is_finite() {
            return None;
        }
        let m = n + 1;
        let mut l = vec![0.0; m * m];
        for i in 0..n {
            l[i * m..i * m + i + 1].copy_from_slice(&self.l[i * n..i * n + i + 1]);
        }
        l[n * m..n * m + n].copy_from_slice(&row);
        l[n * m + n] = d2.sqrt();
        Some(Cholesky { n: m, l })
    }

    /// `L z` for a vector `z`.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n).map(|i| self.l[i * n..i * n + i + 1].iter().zip(z).map(|(a, b)| a * b).sum()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = 1.0 / (1.0 + (i as f64 - j as f64).abs()) + if i == j { n as f64 } else { 0.0 };
            }
        }
        a
    }

    #[test]
    fn solve_and_inverse_agree_with_nalgebra() {
        let n = 6;
        let a = spd(n);
        let c = Cholesky::factor(&a, n, 0.0).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = c.solve(&b);
        let m = nalgebra::DMatrix::from_row_slice(n, n, &a);
        let xr = m.clone().lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
        for i in 0..n {
            assert!((x[i] - xr[i]).abs() < 1e-12);
        }
        let inv = c.inverse();
        let minv = m.try_inverse().unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((inv[i * n + j] - minv[(i, j)]).abs() < 1e-12);
            }
        }
        assert!((c.log_det() - nalgebra::DMatrix::from_row_slice(n, n, &a).determinant().ln()).abs() < 1e-10);
    }

    #[test]
    fn extend_matches_full_factor() {
        let n = 5;
        let a = spd(n);
        let sub: Vec<f64> = (0..n - 1).flat_map(|i| a[i * n..i * n + n - 1].to_vec()).collect();
        let c = Cholesky::factor(&sub, n - 1, 0.0).unwrap();
        let cross: Vec<f64> = (0..n - 1).map(|i| a[i * n + n - 1]).collect();
        let ext = c.extend(&cross, a[n * n - 1]).unwrap();
        let full = Cholesky::factor(&a, n, 0.0).unwrap();
        for i in 0..n {
            for j in 0..=i {
                assert!((ext.at(i, j) - full.at(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        // Rank-one matrix.
        let a = vec![1.0, 1.0, 1.0, 1.0];
        let (_, j) = Cholesky::factor_with_jitter(&a, 2).unwrap();
        assert!(j > 0.0);
        let bad = vec![-1.0, 0.0, 0.0, -1.0];
        match Cholesky::factor_with_jitter(&bad, 2) {
            Err(Error::Factorization { attempted }) => assert_eq!(attempted.len(), 7),
            other => panic!("{other:?}"),
        }
    }
}
