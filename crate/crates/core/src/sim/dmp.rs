use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DMP_SPRING: f64 = 625.0 / 4.0;
pub const DMP_DAMPING: f64 = 25.0;
pub const DMP_BASIS_COUNT: usize = 25;
/// Decay rate of the canonical phase; the phase falls to about 2.4e-4 by the
/// end of the movement so the forcing term has vanished by then.
pub const CANONICAL_DECAY: f64 = 25.0 / 3.0;

/// A dynamic movement primitive: a critically damped spring pulling towards a
/// goal that moves with the goal velocity, plus a phase-gated forcing term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmpParams {
    /// Row `i` holds the weights of basis function `i` for every spatial dimension.
    pub shape_weights: Vec<Vec<f64>>,
    pub goal: Vec<f64>,
    pub goal_velocity: Vec<f64>,
    pub duration: f64,
    pub basis_count: usize,
    pub spring: f64,
    pub damping: f64,
}

/// Positions and velocities sampled every `dt`, starting at time zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    pub fn last_position(&self) -> &[f64] {
        self.positions.last().expect("non-empty trajectory")
    }

    pub fn last_velocity(&self) -> &[f64] {
        self.velocities.last().expect("non-empty trajectory")
    }

    /// Largest per-axis extent of the path.
    pub fn span(&self) -> f64 {
        (0..self.dim())
            .map(|j| {
                let (lo, hi) = self
                    .positions
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[j]), hi.max(p[j])));
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// Root-mean-square Euclidean distance between matching samples.
    pub fn rmse(&self, other: &Trajectory) -> f64 {
        let n = self.len().min(other.len());
        let ss: f64 = (0..n)
            .map(|k| self.positions[k].iter().zip(&other.positions[k]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum();
        (ss / n as f64).sqrt()
    }
}

impl DmpParams {
    /// Zero forcing with the standard constants.
    pub fn new(goal: Vec<f64>, goal_velocity: Vec<f64>, duration: f64) -> Self {
        let dim = goal.len();
        DmpParams {
            shape_weights: vec![vec![0.0; dim]; DMP_BASIS_COUNT],
            goal,
            goal_velocity,
            duration,
            basis_count: DMP_BASIS_COUNT,
            spring: DMP_SPRING,
            damping: DMP_DAMPING,
        }
    }

    pub fn dim(&self) -> usize {
        self.goal.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.goal_velocity.len() != d {
            return Err(Error::contract("goal and goal velocity must share a non-zero dimension"));
        }
        if self.basis_count < 2 || self.shape_weights.len() != self.basis_count {
            return Err(Error::contract("shape weights need one row per basis function and at least two bases"));
        }
        if self.shape_weights.iter().any(|r| r.len() != d) {
            return Err(Error::contract("shape weight rows must match the spatial dimension"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::contract("duration must be positive"));
        }
        if !(self.spring > 0.0) || (self.damping - 2.0 * self.spring.sqrt()).abs() > 1e-9 * self.damping {
            return Err(Error::contract("damping must equal 2 * sqrt(spring)"));
        }
        Ok(())
    }
}

/// Gaussian basis functions placed evenly in time along the phase variable.
struct Basis {
    centers: Vec<f64>,
    widths: Vec<f64>,
}

impl Basis {
    fn new(count: usize) -> Self {
        let centers: Vec<f64> =
            (0..count).map(|i| (-CANONICAL_DECAY * i as f64 / (count - 1) as f64).exp()).collect();
        let mut widths: Vec<f64> = centers.windows(2).map(|c| 1.0 / (0.65 * (c[1] - c[0])).powi(2)).collect();
        widths.push(*widths.last().expect("at least two bases"));
        Basis { centers, widths }
    }

    /// Normalized activations scaled by the phase, so the forcing term is `features . w`.
    fn features(&self, z: f64, out: &mut [f64]) {
        let mut total = 0.0;
        for ((o, c), h) in out.iter_mut().zip(&self.centers).zip(&self.widths) {
            *o = (-h * (z - c) * (z - c)).exp();
            total += *o;
        }
        let scale = if total > 1e-300 { z / total } else { 0.0 };
        out.iter_mut().for_each(|o| *o *= scale);
    }
}

/// Integrate the primitive from `start` at rest for `n_steps` steps of `dt`
/// using classical Runge-Kutta in phase time.
pub fn dmp_integrate(p: &DmpParams, start: &[f64], dt: f64, n_steps: usize) -> Result<Trajectory> {
    dmp_integrate_from(p, start, &vec![0.0; start.len()], dt, n_steps)
}

/// As [`dmp_integrate`] with an explicit initial velocity.
pub fn dmp_integrate_from(
    p: &DmpParams,
    start: &[f64],
    start_velocity: &[f64],
    dt: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    p.validate()?;
    let d = p.dim();
    if start.len() != d || start_velocity.len() != d {
        return Err(Error::contract("start state dimension does not match the primitive"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::contract("dt must be positive"));
    }
    let tau = p.duration;
    let basis = Basis::new(p.basis_count);
    let mut phi = vec![0.0; p.basis_count];

    // State in phase time s = t / tau: position y and scaled velocity u = tau * dy/dt.
    let mut deriv = |s: f64, y: &[f64], u: &[f64], dy: &mut [f64], du: &mut [f64]| {
        basis.features((-CANONICAL_DECAY * s).exp(), &mut phi);
        for j in 0..d {
            let goal = p.goal[j] - p.goal_velocity[j] * tau * (1.0 - s);
            let force: f64 = phi.iter().zip(&p.shape_weights).map(|(f, w)| f * w[j]).sum();
            dy[j] = u[j];
            du[j] = p.spring * (goal - y[j]) - p.damping * (u[j] - tau * p.goal_velocity[j]) + force;
        }
    };

    let h = dt / tau;
    let mut y = start.to_vec();
    let mut u: Vec<f64> = start_velocity.iter().map(|v| v * tau).collect();
    let mut positions = Vec::with_capacity(n_steps + 1);
    let mut velocities = Vec::with_capacity(n_steps + 1);
    positions.push(y.clone());
    velocities.push(u.iter().map(|v| v / tau).collect());

    let mut k = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let mut m = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let mut ty = vec![0.0; d];
    let mut tu = vec![0.0; d];
    for step in 0..n_steps {
        let s = step as f64 * h;
        {
            let [k1, k2, k3, k4] = &mut k;
            let [m1, m2, m3, m4] = &mut m;
            deriv(s, &y, &u, k1, m1);
            for j in 0..d {
                ty[j] = y[j] + 0.5 * h * k1[j];
                tu[j] = u[j] + 0.5 * h * m1[j];
            }
            deriv(s + 0.5 * h, &ty, &tu, k2, m2);
            for j in 0..d {
                ty[j] = y[j] + 0.5 * h * k2[j];
                tu[j] = u[j] + 0.5 * h * m2[j];
            }
            deriv(s + 0.5 * h, &ty, &tu, k3, m3);
            for j in 0..d {
                ty[j] = y[j] + h * k3[j];
                tu[j] = u[j] + h * m3[j];
            }
            deriv(s + h, &ty, &tu, k4, m4);
            for j in 0..d {
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
                u[j] += h / 6.0 * (m1[j] + 2.0 * m2[j] + 2.0 * m3[j] + m4[j]);
            }
        }
        if y.iter().chain(&u).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("DMP integration diverged".into()));
        }
        positions.push(y.clone());
        velocities.push(u.iter().map(|v| v / tau).collect());
    }
    Ok(Trajectory { dt, positions, velocities })
}

/// Fit shape weights so that the primitive reproduces a demonstration. The
/// demo's final state sets the goal and goal velocity; accelerations come
/// from central differences of the demo velocities. All dimensions share one
/// ridge-regularized least-squares design.
pub fn dmp_imitate(demo: &Trajectory, basis_count: usize, duration: f64) -> Result<Vec<Vec<f64>>> {
    let n = demo.len();
    let d = demo.dim();
    if n < 3 || d == 0 || demo.velocities.len() != n {
        return Err(Error::contract("demo needs at least three samples with velocities"));
    }
    if basis_count < 2 {
        return Err(Error::contract("need at least two basis functions"));
    }
    if !(duration > 0.0) {
        return Err(Error::contract("duration must be positive"));
    }
    let tau = duration;
    let dt = demo.dt;
    let goal = demo.last_position();
    let goal_vel = demo.last_velocity();
    let basis = Basis::new(basis_count);

    let mut design = DMatrix::<f64>::zeros(n, basis_count);
    let mut targets = DMatrix::<f64>::zeros(n, d);
    let mut phi = vec![0.0; basis_count];
    for k in 0..n {
        let t = k as f64 * dt;
        basis.features((-CANONICAL_DECAY * t / tau).exp(), &mut phi);
        for (i, f) in phi.iter().enumerate() {
            design[(k, i)] = *f;
        }
        for j in 0..d {
            let acc = if k == 0 {
                (demo.velocities[1][j] - demo.velocities[0][j]) / dt
            } else if k == n - 1 {
                (demo.velocities[k][j] - demo.velocities[k - 1][j]) / dt
            } else {
                (demo.velocities[k + 1][j] - demo.velocities[k - 1][j]) / (2.0 * dt)
            };
            let g = goal[j] - goal_vel[j] * (tau - t);
            targets[(k, j)] = tau * tau * acc - DMP_SPRING * (g - demo.positions[k][j])
                + DMP_DAMPING * tau * (demo.velocities[k][j] - goal_vel[j]);
        }
    }
    let mut gram = design.transpose() * &design;
    let ridge = 1e-10 * gram.trace().max(1e-300) / basis_count as f64;
    for i in 0..basis_count {
        gram[(i, i)] += ridge;
    }
    let rhs = design.transpose() * targets;
    let chol = gram.cholesky().ok_or_else(|| Error::Numerical("imitation normal equations are singular".into()))?;
    let w = chol.solve(&rhs);
    Ok((0..basis_count).map(|i| (0..d).map(|j| w[(i, j)]).collect()).collect())
}

/// Forcing term at phase `z` for the given weights, one entry per dimension.
pub fn forcing(weights: &[Vec<f64>], z: f64) -> Vec<f64> {
    let basis = Basis::new(weights.len());
    let mut phi = vec![0.0; weights.len()];
    basis.features(z, &mut phi);
    let d = weights.first().map_or(0, Vec::len);
    (0..d).map(|j| phi.iter().zip(weights).map(|(f, w)| f * w[j]).sum()).collect()
}

/// Minimum-jerk straight line from `a` to `b` over `duration`, sampled every `dt`.
pub fn minimum_jerk(a: &[f64], b: &[f64], duration: f64, dt: f64) -> Trajectory {
    let n = (duration / dt).round() as usize;
    let mut positions = Vec::with_capacity(n + 1);
    let mut velocities = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let s = (k as f64 * dt / duration).min(1.0);
        let pos = 10.0 * s.powi(3) - 15.0 * s.powi(4) + 6.0 * s.powi(5);
        let vel = (30.0 * s.powi(2) - 60.0 * s.powi(3) + 30.0 * s.powi(4)) / duration;
        positions.push(a.iter().zip(b).map(|(x, y)| x + (y - x) * pos).collect());
        velocities.push(a.iter().zip(b).map(|(x, y)| (y - x) * vel).collect());
    }
    Trajectory { dt, positions, velocities }
}
