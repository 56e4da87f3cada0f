use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experience::Outcome;
use crate::optim::SearchSpace;

pub const CANNON_GRAVITY: f64 = 1.0;
pub const LAUNCH_NOISE_DEG: f64 = 1.0;
pub const TARGET_HALF_WIDTH: f64 = 11.0;
/// Reward-relevant indicator threshold of the active variant.
pub const SHOOT_THRESHOLD: f64 = 0.1;

const HILL_COUNT: usize = 4;
const PAD_RADIUS: f64 = 1.5;
const STEP_DT: f64 = 0.01;
const T_MAX: f64 = 100.0;

/// Gaussian bump `height * exp(-|p - center|^2 / (2 width^2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hill {
    pub center: [f64; 2],
    pub height: f64,
    pub width: f64,
}

/// Flat ground plus Gaussian hills, cannon at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CannonWorld {
    pub seed: u64,
    pub gravity: f64,
    pub hills: Vec<Hill>,
    pub launch_noise_deg: f64,
}

/// Launch orientation, elevation and speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaunchParams {
    pub alpha: f64,
    pub beta: f64,
    pub v: f64,
}

impl LaunchParams {
    pub fn space() -> SearchSpace {
        SearchSpace::new(
            vec![0.0, 0.01, 0.1],
            vec![2.0 * std::f64::consts::PI, std::f64::consts::FRAC_PI_2 - 0.2, 5.0],
        )
        .expect("static bounds")
    }

    pub fn from_slice(p: &[f64]) -> Result<Self> {
        if p.len() != 3 {
            return Err(Error::contract(format!("launch parameters need 3 entries, got {}", p.len())));
        }
        Ok(LaunchParams { alpha: p[0], beta: p[1], v: p[2] })
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.alpha, self.beta, self.v]
    }
}

impl CannonWorld {
    pub fn flat(gravity: f64) -> Self {
        CannonWorld { seed: 0, gravity, hills: Vec::new(), launch_noise_deg: LAUNCH_NOISE_DEG }
    }

    /// Four hills with heights in [0.5, 2], widths in [1.5, 3] and centers
    /// uniform over the target box outside a pad of radius 1.5 at the origin.
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hills = Vec::with_capacity(HILL_COUNT);
        while hills.len() < HILL_COUNT {
            let c = [
                rng.gen_range(-TARGET_HALF_WIDTH..=TARGET_HALF_WIDTH),
                rng.gen_range(-TARGET_HALF_WIDTH..=TARGET_HALF_WIDTH),
            ];
            if c[0].hypot(c[1]) < PAD_RADIUS {
                continue;
            }
            let height = rng.gen_range(0.5..=2.0);
            let width = rng.gen_range(1.5..=3.0);
            hills.push(Hill { center: c, height, width });
        }
        CannonWorld { seed, gravity: CANNON_GRAVITY, hills, launch_noise_deg: LAUNCH_NOISE_DEG }
    }

    pub fn terrain_elevation(&self, x: f64, y: f64) -> f64 {
        self.hills
            .iter()
            .map(|h| {
                let d2 = (x - h.center[0]).powi(2) + (y - h.center[1]).powi(2);
                h.height * (-d2 / (2.0 * h.width * h.width)).exp()
            })
            .sum()
    }

    /// Largest distance from the origin at which a hill still rises more than
    /// 1e-6 above the ground.
    pub fn max_hill_extent(&self) -> f64 {
        self.hills
            .iter()
            .map(|h| h.center[0].hypot(h.center[1]) + h.width * (2.0 * (h.height / 1e-6).ln()).sqrt())
            .fold(0.0, f64::max)
    }

    /// Fire the cannon. The shell leaves the terrain surface at the origin and
    /// lands at the first later time it meets the terrain again.
    pub fn rollout(&self, params: LaunchParams, train_mode: bool, rng: &mut dyn RngCore) -> Result<Outcome> {
        let space = LaunchParams::space();
        if !space.contains(&params.to_vec()) {
            return Err(Error::contract(format!("launch parameters out of bounds: {params:?}")));
        }
        let (mut alpha, mut beta) = (params.alpha, params.beta);
        if train_mode && self.launch_noise_deg > 0.0 {
            let noise = Normal::new(0.0, self.launch_noise_deg.to_radians()).expect("positive std");
            alpha += rng.sample(noise);
            beta += rng.sample(noise);
        }
        let vel = [
            params.v * beta.cos() * alpha.cos(),
            params.v * beta.cos() * alpha.sin(),
            params.v * beta.sin(),
        ];
        let z0 = self.terrain_elevation(0.0, 0.0);
        let g = self.gravity;
        let pos = |t: f64| [vel[0] * t, vel[1] * t, z0 + vel[2] * t - 0.5 * g * t * t];
        let height = |t: f64| {
            let p = pos(t);
            p[2] - self.terrain_elevation(p[0], p[1])
        };

        let mut lo = 0.0;
        let mut hi = None;
        let mut k = 1u32;
        loop {
            let t = k as f64 * STEP_DT;
            if t > T_MAX {
                break;
            }
            if height(t) <= 0.0 {
                hi = Some(t);
                break;
            }
            lo = t;
            k += 1;
        }
        let Some(mut hi) = hi else {
            return Err(Error::Simulation(format!("no terrain intersection within t_max = {T_MAX}")));
        };
        for _ in 0..200 {
            if hi - lo <= 1e-13 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if height(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let p = pos(hi);
        Ok(Outcome { stats: vec![p[0], p[1], params.v], achieved_target: vec![p[0], p[1]] })
    }

    /// Landing height of an outcome (the terrain elevation at the landing point).
    pub fn landing_height(&self, outcome: &Outcome) -> f64 {
        self.terrain_elevation(outcome.stats[0], outcome.stats[1])
    }
}

/// `-|target - achieved| - 0.05 v^2`, with `v` the commanded speed.
pub fn cannon_reward(target: &[f64], outcome: &Outcome, params: &[f64]) -> f64 {
    let d = (target[0] - outcome.achieved_target[0]).hypot(target[1] - outcome.achieved_target[1]);
    let v = params[2];
    -d - 0.05 * v * v
}

/// Active variant: the third target entry is the shoot indicator. At or
/// below the threshold the shot is scored as usual; above it the reward is
/// the action penalty `-|theta|`.
pub fn active_cannon_reward(target: &[f64], outcome: &Outcome, params: &[f64]) -> f64 {
    if target[2] <= SHOOT_THRESHOLD {
        cannon_reward(&target[..2], outcome, params)
    } else {
        -params.iter().map(|p| p * p).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn elevation_reference_values() {
        let mut w = CannonWorld::flat(1.0);
        assert_eq!(w.terrain_elevation(3.0, -2.0), 0.0);
        w.hills.push(Hill { center: [4.0, 1.0], height: 1.5, width: 2.0 });
        assert!((w.terrain_elevation(4.0, 1.0) - 1.5).abs() < 1e-15);
        assert!((w.terrain_elevation(8.0, 1.0) - 1.5 * (-2f64).exp()).abs() < 1e-12);
        assert!((w.terrain_elevation(8.0, 1.0) / 1.5 - 0.1353).abs() < 1e-4);
    }

    #[test]
    fn flat_range_matches_closed_form() {
        let w = CannonWorld::flat(1.0);
        let o = w.rollout(LaunchParams { alpha: 0.0, beta: FRAC_PI_4, v: 3.0 }, false, &mut rng()).unwrap();
        assert!((o.stats[0] - 9.0).abs() < 1e-6, "{o:?}");
        assert!(o.stats[1].abs() < 1e-9);
        assert_eq!(o.stats[2], 3.0);
    }

    #[test]
    fn quarter_turn_swaps_axes() {
        let w = CannonWorld::flat(1.0);
        let a = w.rollout(LaunchParams { alpha: 0.0, beta: 0.6, v: 2.5 }, false, &mut rng()).unwrap();
        let b = w.rollout(LaunchParams { alpha: FRAC_PI_2, beta: 0.6, v: 2.5 }, false, &mut rng()).unwrap();
        assert!((a.stats[0] - b.stats[1]).abs() < 1e-9);
        assert!((a.stats[1] - b.stats[0]).abs() < 1e-9);
    }

    #[test]
    fn hill_under_apex_shortens_range() {
        let flat = CannonWorld::flat(1.0);
        let p = LaunchParams { alpha: 0.0, beta: FRAC_PI_4, v: 3.0 };
        let mut hilly = flat.clone();
        hilly.hills.push(Hill { center: [7.0, 0.0], height: 1.5, width: 1.5 });
        let a = flat.rollout(p, false, &mut rng()).unwrap();
        let b = hilly.rollout(p, false, &mut rng()).unwrap();
        assert!(b.stats[0] < a.stats[0]);
        assert!((hilly.landing_height(&b) - 0.0).abs() > 1e-3);
    }

    #[test]
    fn rewards() {
        let hit = Outcome { stats: vec![1.0, 2.0, 2.0], achieved_target: vec![1.0, 2.0] };
        assert!((cannon_reward(&[1.0, 2.0], &hit, &[0.0, 0.5, 2.0]) + 0.2).abs() < 1e-12);
        let miss = Outcome { stats: vec![3.0, 4.0, 0.1], achieved_target: vec![3.0, 4.0] };
        assert!((cannon_reward(&[0.0, 0.0], &miss, &[0.0, 0.5, 0.1]) + 5.0005).abs() < 1e-12);
        let shifted = Outcome { stats: vec![13.0, 4.0, 0.1], achieved_target: vec![13.0, 4.0] };
        assert_eq!(cannon_reward(&[0.0, 0.0], &miss, &[0.0, 0.5, 0.1]), cannon_reward(&[10.0, 0.0], &shifted, &[0.0, 0.5, 0.1]));

        let p = [0.01, 0.01, 0.1];
        assert_eq!(active_cannon_reward(&[0.0, 0.0, 0.05], &miss, &p), cannon_reward(&[0.0, 0.0], &miss, &p));
        let penalty = active_cannon_reward(&[0.0, 0.0, 0.5], &miss, &p);
        assert!((penalty + 0.0102f64.sqrt()).abs() < 1e-15);
        assert!((penalty + 0.1005).abs() < 1e-3);
    }

    #[test]
    fn generated_worlds_respect_design() {
        for seed in 0..20 {
            let w = CannonWorld::generate(seed);
            assert_eq!(w.hills.len(), 4);
            for h in &w.hills {
                assert!(h.center[0].hypot(h.center[1]) >= 1.5);
                assert!((0.5..=2.0).contains(&h.height) && (1.5..=3.0).contains(&h.width));
            }
            assert_eq!(w, CannonWorld::generate(seed));
        }
    }

    #[test]
    fn out_of_bounds_params_rejected() {
        let w = CannonWorld::flat(1.0);
        assert!(w.rollout(LaunchParams { alpha: 0.0, beta: 1.5, v: 1.0 }, false, &mut rng()).is_err());
    }
}
