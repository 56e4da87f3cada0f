use serde::{Deserialize, Serialize};

use super::dmp::{dmp_imitate, dmp_integrate, DmpParams, Trajectory, DMP_BASIS_COUNT};
use crate::error::{Error, Result};
use crate::experience::Outcome;
use crate::optim::SearchSpace;

pub const THROWER_GRAVITY: f64 = 9.81;

/// Point-mass ball thrown by a task-space DMP. The hand starts at rest at
/// `(s_x, s_y, start_height)`, where `(s_x, s_y)` is the environment context,
/// and releases the ball with the final DMP state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThrowerWorld {
    pub gravity: f64,
    pub ground_z: f64,
    pub start_height: f64,
    pub duration: f64,
    pub dt: f64,
    pub shape_weights: Vec<Vec<f64>>,
    pub start_space: SearchSpace,
    pub target_space: SearchSpace,
}

impl ThrowerWorld {
    /// Default world with shape weights imitated from a synthetic overhand
    /// throw: a minimum-jerk reach forward with a back-and-up wind-up arc.
    pub fn standard() -> Result<Self> {
        let duration = 1.0;
        let dt = 0.01;
        let demo = windup_demo(&[0.0, 1.25, 0.0], duration, dt / 4.0);
        let shape_weights = dmp_imitate(&demo, DMP_BASIS_COUNT, duration)?;
        Ok(ThrowerWorld {
            gravity: THROWER_GRAVITY,
            ground_z: 0.0,
            start_height: 1.0,
            duration,
            dt,
            shape_weights,
            start_space: SearchSpace::new(vec![-0.1, -0.1], vec![0.1, 0.1])?,
            target_space: SearchSpace::new(vec![-0.4, 1.1], vec![0.4, 1.9])?,
        })
    }

    /// Goal offset relative to the start, then goal velocity.
    pub fn param_space() -> SearchSpace {
        SearchSpace::new(vec![-0.5, 1.0, -0.5, 0.0, 0.0, 0.0], vec![0.5, 1.5, 0.5, 1.0, 1.0, 1.0])
            .expect("static bounds")
    }

    /// The hand movement for a start context and parameters.
    pub fn movement(&self, start: &[f64], params: &[f64]) -> Result<Trajectory> {
        if start.len() != 2 || params.len() != 6 {
            return Err(Error::contract("thrower expects a 2-D start and 6 parameters"));
        }
        let origin = [start[0], start[1], self.start_height];
        let goal: Vec<f64> = origin.iter().zip(&params[..3]).map(|(o, g)| o + g).collect();
        let mut p = DmpParams::new(goal, params[3..].to_vec(), self.duration);
        p.shape_weights = self.shape_weights.clone();
        let steps = (self.duration / self.dt).round() as usize;
        dmp_integrate(&p, &origin, self.dt, steps)
    }

    /// Throw from `start` with `params`. Deterministic.
    pub fn rollout(&self, start: &[f64], params: &[f64]) -> Result<Outcome> {
        if !Self::param_space().contains(params) {
            return Err(Error::contract("thrower parameters out of bounds"));
        }
        let traj = self.movement(start, params)?;
        let pos = traj.last_position();
        let vel = traj.last_velocity();
        let land = ballistic_landing(pos, vel, self.gravity, self.ground_z)?;
        let mut stats = land.to_vec();
        stats.extend_from_slice(pos);
        stats.extend_from_slice(vel);
        Ok(Outcome { stats, achieved_target: land.to_vec() })
    }
}

fn windup_demo(reach: &[f64], duration: f64, dt: f64) -> Trajectory {
    let windup = [0.0, -0.3, 0.25];
    let n = (duration / dt).round() as usize;
    let mut positions = Vec::with_capacity(n + 1);
    let mut velocities = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let s = k as f64 / n as f64;
        let mj = 10.0 * s.powi(3) - 15.0 * s.powi(4) + 6.0 * s.powi(5);
        let dmj = (30.0 * s.powi(2) - 60.0 * s.powi(3) + 30.0 * s.powi(4)) / duration;
        let arc = (std::f64::consts::PI * s).sin().powi(2);
        let darc = std::f64::consts::PI * (2.0 * std::f64::consts::PI * s).sin() / duration;
        positions.push((0..3).map(|j| reach[j] * mj + windup[j] * arc).collect());
        velocities.push((0..3).map(|j| reach[j] * dmj + windup[j] * darc).collect());
    }
    Trajectory { dt, positions, velocities }
}

/// Landing point on the plane `z = ground` of a ball released at `pos` with `vel`.
pub fn ballistic_landing(pos: &[f64], vel: &[f64], gravity: f64, ground: f64) -> Result<[f64; 2]> {
    if !(gravity > 0.0) {
        return Err(Error::contract("gravity must be positive"));
    }
    let h = pos[2] - ground;
    let disc = vel[2] * vel[2] + 2.0 * gravity * h;
    if disc < 0.0 || !disc.is_finite() {
        return Err(Error::Simulation("ball never reaches the ground".into()));
    }
    let t = ((vel[2] + disc.sqrt()) / gravity).max(0.0);
    Ok([pos[0] + vel[0] * t, pos[1] + vel[1] * t])
}

/// Negated distance between the target and the landing point.
pub fn thrower_reward(target: &[f64], outcome: &Outcome) -> f64 {
    -(target[0] - outcome.achieved_target[0]).hypot(target[1] - outcome.achieved_target[1])
}
