use fcps::gp::{kernel_eval, nlml, GpModel, KernelHyperparams};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>, KernelHyperparams) {
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let h = KernelHyperparams::new(
        rng.gen_range(0.3..3.0),
        (0..d).map(|_| rng.gen_range(0.1..1.5)).collect(),
        rng.gen_range(1e-4..0.2),
    )
    .unwrap();
    (x, y, h)
}

/// Dense reference: K + noise I solved directly by nalgebra.
fn dense_predict(x: &[Vec<f64>], y: &[f64], h: &KernelHyperparams, q: &[f64]) -> (f64, f64) {
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        kernel_eval(&x[i], &x[j], h).unwrap() + if i == j { h.noise_variance } else { 0.0 }
    });
    let ks = DVector::from_fn(n, |i, _| kernel_eval(&x[i], q, h).unwrap());
    let inv = k.try_inverse().unwrap();
    let mean = (ks.transpose() * &inv * DVector::from_column_slice(y))[0];
    let var = h.signal_variance - (ks.transpose() * &inv * &ks)[0];
    (mean, var)
}

#[test]
fn two_point_posterior_matches_dense_solve() {
    let h = KernelHyperparams::new(1.0, vec![1.0], 1e-6).unwrap();
    let x = vec![vec![0.0], vec![1.0]];
    let y = vec![0.0, 1.0];
    let m = GpModel::fit(&x, &y, &h).unwrap();
    let p = m.predict(&[0.5]).unwrap();
    let (mean, var) = dense_predict(&x, &y, &h, &[0.5]);
    assert!((p.mean - mean).abs() < 1e-8, "{} vs {mean}", p.mean);
    assert!((p.variance - var).abs() < 1e-8);
}

#[test]
fn nlml_gradient_on_fifty_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for inst in 0..50 {
        let n = rng.gen_range(3..12);
        let d = rng.gen_range(1..5);
        let (x, y, h) = random_instance(&mut rng, n, d);
        let (_, grad) = nlml(&x, &y, &h).unwrap();
        let logp = h.to_log();
        for (k, g) in grad.iter().enumerate() {
            let step = 1e-5;
            let mut up = logp.clone();
            up[k] += step;
            let mut dn = logp.clone();
            dn[k] -= step;
            let fu = nlml(&x, &y, &KernelHyperparams::from_log(&up)).unwrap().0;
            let fd = nlml(&x, &y, &KernelHyperparams::from_log(&dn)).unwrap().0;
            let numeric = (fu - fd) / (2.0 * step);
            let rel = (g - numeric).abs() / numeric.abs().max(1e-3);
            assert!(rel <= 1e-4, "instance {inst} coord {k}: analytic {g} numeric {numeric}");
        }
    }
}

#[test]
fn noise_free_interpolation() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let (x, y, mut h) = random_instance(&mut rng, 8, 3);
        h.noise_variance = 1e-10;
        // Keep points apart so the kernel matrix stays well conditioned.
        h.lengthscales.iter_mut().for_each(|l| *l = l.min(0.3));
        let m = GpModel::fit(&x, &y, &h).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            let p = m.predict(xi).unwrap();
            assert!((p.mean - yi).abs() <= 1e-6 * yi.abs().max(1.0), "{} vs {yi}", p.mean);
        }
    }
}

#[test]
fn posterior_sampling_means_and_pinned_points() {
    let h = KernelHyperparams::new(1.5, vec![0.4, 0.4], 1e-10).unwrap();
    let x = vec![vec![0.2, 0.2], vec![0.7, 0.5]];
    let y = vec![1.0, -0.5];
    let m = GpModel::fit(&x, &y, &h).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let q = vec![0.5, 0.9];
    let k = 10_000;
    let draws = m.sample_posterior(&[q.clone()], k, &mut rng).unwrap();
    let mean = draws.iter().map(|d| d[0]).sum::<f64>() / k as f64;
    let p = m.predict(&q).unwrap();
    assert!((mean - p.mean).abs() <= 3.0 * p.variance.sqrt() / (k as f64).sqrt());

    let pinned = m.sample_posterior(&[x[0].clone(), q.clone()], 200, &mut rng).unwrap();
    assert!(pinned.iter().all(|d| (d[0] - 1.0).abs() < 1e-4));

    let a = m.sample_posterior(&[q.clone()], 5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = m.sample_posterior(&[q], 5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fantasizing_the_mean_keeps_the_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (x, y, h) = random_instance(&mut rng, 10, 2);
    let m = GpModel::fit(&x, &y, &h).unwrap();
    let q = vec![0.35, 0.8];
    let mu = m.predict(&q).unwrap().mean;
    let f = m.fantasize(&q, mu).unwrap();
    assert!((f.predict(&q).unwrap().mean - mu).abs() < 1e-9);
}

fn instance() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 1usize..=20, 1usize..=6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fantasize_equals_refit((seed, n, d) in instance()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y, h) = random_instance(&mut rng, n, d);
        let m = GpModel::fit(&x, &y, &h).unwrap();
        let q: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
        let yq = rng.gen_range(-2.0..2.0);
        let fantasy = m.fantasize(&q, yq).unwrap();
        let mut x2 = x.clone();
        x2.push(q);
        let mut y2 = y.clone();
        y2.push(yq);
        let refit = GpModel::fit(&x2, &y2, &h).unwrap();
        for _ in 0..20 {
            let t: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.2..1.2)).collect();
            let a = fantasy.predict(&t).unwrap();
            let b = refit.predict(&t).unwrap();
            prop_assert!((a.mean - b.mean).abs() <= 1e-8, "mean {} vs {}", a.mean, b.mean);
            prop_assert!((a.variance - b.variance).abs() <= 1e-8);
        }
    }

    #[test]
    fn variance_non_negative_and_shrinks_with_data((seed, n, d) in instance()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y, h) = random_instance(&mut rng, n, d);
        let m = GpModel::fit(&x[..n - 1], &y[..n - 1], &h);
        let full = GpModel::fit(&x, &y, &h).unwrap();
        for _ in 0..20 {
            let t: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5..1.5)).collect();
            let after = full.predict(&t).unwrap().variance;
            prop_assert!(after >= -1e-8);
            if let Ok(before) = &m {
                let before = before.predict(&t).unwrap().variance;
                prop_assert!(after <= before + 1e-8, "{after} > {before}");
            }
        }
    }

    #[test]
    fn gram_matrix_is_psd((seed, n, d) in instance()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, _, h) = random_instance(&mut rng, n, d);
        let k = DMatrix::from_fn(n, n, |i, j| kernel_eval(&x[i], &x[j], &h).unwrap());
        let trace = k.trace();
        let eig = SymmetricEigen::new(k).eigenvalues;
        prop_assert!(eig.iter().all(|e| *e >= -1e-8 * trace));
    }

    #[test]
    fn kernel_symmetric_and_bounded((seed, _n, d) in instance()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, _, h) = random_instance(&mut rng, 1, d);
        let a: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let kab = kernel_eval(&a, &b, &h).unwrap();
        prop_assert_eq!(kab, kernel_eval(&b, &a, &h).unwrap());
        prop_assert!(kab >= 0.0 && kab <= h.signal_variance);
    }

    #[test]
    fn prediction_matches_dense_oracle((seed, n, d) in instance()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y, mut h) = random_instance(&mut rng, n, d);
        h.noise_variance = h.noise_variance.max(1e-2);
        let m = GpModel::fit(&x, &y, &h).unwrap();
        let q: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
        let p = m.predict(&q).unwrap();
        let (mean, var) = dense_predict(&x, &y, &h, &q);
        prop_assert!((p.mean - mean).abs() <= 1e-7 * mean.abs().max(1.0));
        prop_assert!((p.variance - var).abs() <= 1e-7);
    }
}
