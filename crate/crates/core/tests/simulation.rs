use fcps::sim::dmp::{forcing, DMP_BASIS_COUNT, DMP_SPRING};
use fcps::sim::{
    ballistic_landing, dmp_imitate, dmp_integrate, minimum_jerk, thrower_reward, CannonWorld, DmpParams, Hill,
    LaunchParams, ThrowerWorld,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_params(rng: &mut ChaCha8Rng) -> LaunchParams {
    let space = LaunchParams::space();
    LaunchParams::from_slice(&space.sample_uniform(rng)).unwrap()
}

#[test]
fn lone_hill_two_widths_out() {
    let mut w = CannonWorld::flat(1.0);
    w.hills.push(Hill { center: [4.0, -2.0], height: 1.7, width: 2.0 });
    let z = w.terrain_elevation(4.0 + 4.0 * 0.6, -2.0 + 4.0 * 0.8);
    assert!((z - 1.7 * (-2.0f64).exp()).abs() < 1e-12);
    assert_eq!(w.terrain_elevation(4.0, -2.0), 1.7);
}

#[test]
fn flat_ballistic_range() {
    let w = CannonWorld::flat(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (beta, v) in [(std::f64::consts::FRAC_PI_4, 3.0), (0.3, 2.0), (1.2, 4.5)] {
        let o = w.rollout(LaunchParams { alpha: 0.0, beta, v }, false, &mut rng).unwrap();
        let range = v * v * (2.0 * beta).sin();
        assert!((o.stats[0] - range).abs() <= 1e-6, "{} vs {range}", o.stats[0]);
        assert!(o.stats[1].abs() <= 1e-9);
        assert_eq!(o.stats[2], v);
    }
}

#[test]
fn landing_on_terrain_and_energy_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for seed in 0..20 {
        let w = CannonWorld::generate(seed);
        for _ in 0..50 {
            let p = random_params(&mut rng);
            let o = w.rollout(p, true, &mut rng).unwrap();
            let (x, y) = (o.stats[0], o.stats[1]);
            // Shell height at the landing time of a noise-free shot, from the flight time.
            let clean = w.rollout(p, false, &mut rng).unwrap();
            let t = clean.stats[0].hypot(clean.stats[1]) / (p.v * p.beta.cos());
            let z = w.terrain_elevation(0.0, 0.0) + p.v * p.beta.sin() * t - 0.5 * w.gravity * t * t;
            assert!((z - w.landing_height(&clean)).abs() <= 1e-8, "seed {seed}: {z} vs {}", w.landing_height(&clean));
            assert!(x.hypot(y) <= p.v * p.v / w.gravity + w.max_hill_extent());
        }
    }
}

#[test]
fn free_fall_and_drop_time() {
    let l = ballistic_landing(&[0.3, -0.2, 1.0], &[0.0, 0.0, 0.0], 9.81, 0.0).unwrap();
    assert!((l[0] - 0.3).abs() < 1e-15 && (l[1] + 0.2).abs() < 1e-15);
    let l = ballistic_landing(&[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], 9.81, 0.0).unwrap();
    assert!((l[0] - (2.0f64 / 9.81).sqrt()).abs() < 1e-12);
}

#[test]
fn thrower_reward_examples() {
    let o = |x: f64, y: f64| fcps::experience::Outcome { stats: vec![x, y], achieved_target: vec![x, y] };
    assert_eq!(thrower_reward(&[1.0, 1.0], &o(1.0, 1.0)), 0.0);
    assert!((thrower_reward(&[0.0, 0.0], &o(0.3, 0.4)) + 0.5).abs() < 1e-15);
    assert_eq!(thrower_reward(&[0.2, 1.3], &o(-0.1, 1.7)), thrower_reward(&[-0.1, 1.7], &o(0.2, 1.3)));
}

fn random_dmp(rng: &mut ChaCha8Rng, duration: f64, scale: f64) -> DmpParams {
    let mut p = DmpParams::new(
        (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        duration,
    );
    for row in p.shape_weights.iter_mut() {
        if scale > 0.0 {
            row.iter_mut().for_each(|w| *w = rng.gen_range(-scale..scale));
        }
    }
    p
}

#[test]
fn zero_forcing_reaches_goal() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let mut p = random_dmp(&mut rng, 1.5, 0.0);
        p.goal_velocity = vec![0.0; 3];
        let y0: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = 1500;
        let tr = dmp_integrate(&p, &y0, p.duration / n as f64, n).unwrap();
        let err = tr.last_position().iter().zip(&p.goal).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let dist = y0.iter().zip(&p.goal).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-3 * dist, "{err} vs {dist}");
    }
}

#[test]
fn halving_dt_changes_final_state_little() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let p = random_dmp(&mut rng, 1.0, 50.0);
        let y0 = [0.1, -0.2, 0.3];
        let a = dmp_integrate(&p, &y0, 1e-3, 1000).unwrap();
        let b = dmp_integrate(&p, &y0, 5e-4, 2000).unwrap();
        let diff = a.last_position().iter().zip(b.last_position()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-4, "{diff}");
        assert_eq!(a, dmp_integrate(&p, &y0, 1e-3, 1000).unwrap());
    }
}

#[test]
fn temporal_scaling_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let mut p = random_dmp(&mut rng, 0.8, 40.0);
        let y0 = [0.0, 0.5, -0.5];
        let fast = dmp_integrate(&p, &y0, 2e-3, 400).unwrap();
        p.duration *= 2.0;
        // The goal moves at the goal velocity per unit of real time, so halve it.
        p.goal_velocity.iter_mut().for_each(|v| *v *= 0.5);
        let slow = dmp_integrate(&p, &y0, 4e-3, 400).unwrap();
        for (a, b) in fast.positions.iter().zip(&slow.positions) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-6, "{x} vs {y}");
            }
        }
    }
}

#[test]
fn imitation_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dt = 1e-3;
    for _ in 0..5 {
        let p = random_dmp(&mut rng, 1.0, 100.0);
        let y0 = [0.2, 0.0, -0.3];
        let demo = dmp_integrate(&p, &y0, dt, 1000).unwrap();
        let w = dmp_imitate(&demo, DMP_BASIS_COUNT, 1.0).unwrap();
        let mut q = DmpParams::new(demo.last_position().to_vec(), demo.last_velocity().to_vec(), 1.0);
        q.shape_weights = w;
        let again = dmp_integrate(&q, &y0, dt, 1000).unwrap();
        assert!(again.rmse(&demo) <= 1e-2 * demo.span(), "{} vs span {}", again.rmse(&demo), demo.span());
    }

    let demo = minimum_jerk(&[0.0, 0.0, 0.0], &[0.5, 1.0, -0.2], 1.0, dt);
    let w = dmp_imitate(&demo, DMP_BASIS_COUNT, 1.0).unwrap();
    let mut q = DmpParams::new(demo.last_position().to_vec(), demo.last_velocity().to_vec(), 1.0);
    q.shape_weights = w;
    let again = dmp_integrate(&q, &[0.0, 0.0, 0.0], dt, demo.len() - 1).unwrap();
    assert!(again.rmse(&demo) <= 1e-2 * demo.span());

    let still = minimum_jerk(&[0.3, 0.3, 0.3], &[0.3, 0.3, 0.3], 1.0, dt);
    let w = dmp_imitate(&still, DMP_BASIS_COUNT, 1.0).unwrap();
    for z in [1.0, 0.5, 0.1, 0.01] {
        assert!(forcing(&w, z).iter().all(|f| f.abs() <= 1e-6 * DMP_SPRING));
    }
}

#[test]
fn thrower_reaches_its_whole_target_box() {
    let w = ThrowerWorld::standard().unwrap();
    let space = ThrowerWorld::param_space();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let landings: Vec<[f64; 2]> = (0..4000)
        .map(|_| {
            let o = w.rollout(&[0.0, 0.0], &space.sample_uniform(&mut rng)).unwrap();
            [o.achieved_target[0], o.achieved_target[1]]
        })
        .collect();
    // Every corner of the target box has a landing within 0.15.
    let (lo, hi) = (w.target_space.lower(), w.target_space.upper());
    for c in [[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]] {
        let best = landings.iter().map(|l| (l[0] - c[0]).hypot(l[1] - c[1])).fold(f64::MAX, f64::min);
        assert!(best <= 0.15, "corner {c:?}: nearest landing {best}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noise_free_shots_are_repeatable(seed in 0u64..1000, a in 0.0f64..6.28, b in 0.01f64..1.37, v in 0.1f64..5.0) {
        let w = CannonWorld::generate(seed);
        let p = LaunchParams { alpha: a, beta: b, v };
        let x = w.rollout(p, false, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let y = w.rollout(p, false, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        prop_assert_eq!(x, y);
    }
}
