use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `lower[i] < upper[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace")]
pub struct SearchSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawSpace> for SearchSpace {
    type Error = Error;

    fn try_from(raw: RawSpace) -> Result<Self> {
        SearchSpace::new(raw.lower, raw.upper)
    }
}

impl SearchSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::contract(format!(
                "bounds length mismatch: {} vs {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::contract(format!("bad bounds in dim {i}: [{l}, {u}]")));
            }
        }
        Ok(SearchSpace { lower, upper })
    }

    /// Zero-dimensional space, used for absent environment contexts.
    pub fn empty() -> Self {
        SearchSpace { lower: Vec::new(), upper: Vec::new() }
    }

    /// Same bounds in every dimension.
    pub fn cube(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    pub fn clamped(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.clamp(&mut out);
        out
    }

    /// Map a point from unit-cube coordinates to the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (l, h))| l + t * (h - l))
            .collect()
    }

    /// Map a point of the box to unit-cube coordinates.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, h))| (v - l) / (h - l))
            .collect()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| rng.gen_range(*l..=*u)).collect()
    }

    /// Latin-hypercube sample of `n` points: each axis is cut into `n` strata
    /// and every stratum holds exactly one point.
    pub fn latin_hypercube<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        use rand::seq::SliceRandom;
        let d = self.dim();
        let mut points = vec![vec![0.0; d]; n];
        let mut perm: Vec<usize> = (0..n).collect();
        for j in 0..d {
            perm.shuffle(rng);
            for (i, p) in points.iter_mut().enumerate() {
                let u = (perm[i] as f64 + rng.gen::<f64>()) / n as f64;
                p[j] = self.lower[j] + u * (self.upper[j] - self.lower[j]);
            }
        }
        points
    }

    /// Concatenate two boxes into the product space.
    pub fn product(&self, other: &SearchSpace) -> SearchSpace {
        let mut lower = self.lower.clone();
        lower.extend_from_slice(&other.lower);
        let mut upper = self.upper.clone();
        upper.extend_from_slice(&other.upper);
        SearchSpace { lower, upper }
    }

    /// Evenly spaced grid with `per_axis` points per dimension, endpoints included,
    /// enumerated with the first axis varying slowest.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        if d == 0 || per_axis == 0 {
            return Vec::new();
        }
        let axis = |j: usize, k: usize| {
            if per_axis == 1 {
                0.5 * (self.lower[j] + self.upper[j])
            } else {
                self.lower[j] + (self.upper[j] - self.lower[j]) * k as f64 / (per_axis - 1) as f64
            }
        };
        let total = per_axis.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                let mut p = vec![0.0; d];
                for j in (0..d).rev() {
                    p[j] = axis(j, idx % per_axis);
                    idx /= per_axis;
                }
                p
            })
            .collect()
    }
}
