use marginlab::data::{sample_distribution_d, Dataset};
use marginlab::lowerbound::{
    cancellation_residuals, cube_exp_bruteforce, f_tilde, f_tilde_mass_probe, fit_symmetrization_constant, h1, h2,
    ktilde1, ktilde2, poly_g_residual, sample_tail, with_head, PolyG,
};
use marginlab::ntk::{fit_kernel_ridge, k1, k2, NtkConfig};
use marginlab::stats::ols_slope;
use marginlab::{Error, Seed};
use proptest::prelude::*;
use rand::Rng;

fn signs(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect()
}

#[test]
fn closed_forms_match_lifted_kernels() {
    let mut rng = Seed(1).rng(2);
    for i in 0..100 {
        let d = 4 + i % 30;
        let z = signs(d - 2, &mut rng);
        let zp = signs(d - 2, &mut rng);
        let a = with_head(0.0, 1.0, &zp);
        let b = with_head(1.0, 0.0, &z);
        assert!((ktilde1(&z, &zp, d).unwrap() - k1(&a, &b).unwrap()).abs() <= 1e-12 * d as f64);
        assert!((ktilde2(&z, &zp, d).unwrap() - k2(&a, &b).unwrap()).abs() <= 1e-12 * d as f64);
    }
    let z = signs(10, &mut rng);
    let d = 12;
    let direct = k1(&with_head(0.0, 1.0, &z), &with_head(1.0, 0.0, &z)).unwrap();
    assert!((ktilde1(&z, &z, d).unwrap() - direct).abs() < 1e-12);
    assert!((ktilde1(&z, &z, d).unwrap() - 11.0 * h1(10.0 / 11.0)).abs() < 1e-12);
    assert!(matches!(ktilde1(&z, &z, 11), Err(Error::Dimension(_))));
    assert!(ktilde1(&[0.5; 10], &z, 12).is_err());
    assert_eq!(h2(0.0), 1.0 / std::f64::consts::PI);
}

#[test]
fn f_tilde_trivial_values() {
    let mut rng = Seed(2).rng(2);
    let d = 10;
    let z = signs(d - 2, &mut rng);
    let zi = signs(d - 2, &mut rng);
    assert_eq!(f_tilde(&z, &[zi.clone()], &[0.0], 1.0, 1.0, d).unwrap(), 0.0);
    let v = f_tilde(&z, &[zi.clone()], &[1.0], 0.7, 1.3, d).unwrap();
    let k1v = ktilde1(&zi, &z, d).unwrap();
    let k2v = ktilde2(&zi, &z, d).unwrap();
    assert!((v - (0.7 * k1v + 1.3 * (k1v + k2v))).abs() < 1e-12);
    assert!(f_tilde(&z, &[zi], &[1.0, 2.0], 1.0, 1.0, d).is_err());
}

#[test]
fn symmetrization_constant_is_order_one() {
    let d = 40;
    let data = sample_distribution_d(60, d, Seed(3)).unwrap();
    let xs: Vec<Vec<f64>> = data.examples().iter().map(|e| e.x.as_slice().to_vec()).collect();
    let mut rng = Seed(3).rng(4);
    let beta: Vec<f64> = (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c = fit_symmetrization_constant(&xs, &beta, NtkConfig::default(), d, 300, Seed(5)).unwrap();
    assert!(c.is_finite() && c > 0.0 && c < 50.0, "fitted c = {c}");
    assert_eq!(fit_symmetrization_constant(&xs, &vec![0.0; 60], NtkConfig::default(), d, 10, Seed(5)).unwrap(), 0.0);
}

#[test]
fn cancellation_residual_decays_like_one_over_d() {
    let dims = [64usize, 128, 256, 512];
    let mut logs = Vec::new();
    for &d in &dims {
        let tail: Vec<f64> = sample_tail(d, Seed(9), d as u64).iter().copied().collect();
        let x = with_head(1.0, 0.0, &tail);
        let r = cancellation_residuals(&x, d, 400, Seed(d as u64)).unwrap();
        logs.push(((d as f64).ln(), r.k1_mean.ln()));
    }
    let xs: Vec<f64> = logs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = logs.iter().map(|p| p.1).collect();
    let slope = ols_slope(&xs, &ys);
    assert!((-1.3..=-0.7).contains(&slope), "slope {slope}");
}

#[test]
fn cancellation_residual_edge_cases() {
    let d = 16;
    let tail: Vec<f64> = sample_tail(d, Seed(1), 0).iter().copied().collect();
    let x = with_head(0.0, -1.0, &tail);
    let r = cancellation_residuals(&x, d, 50, Seed(2)).unwrap();
    assert_eq!(r.k1_max, 0.0);
    let r = cancellation_residuals(&x, d, 0, Seed(2)).unwrap();
    assert_eq!((r.trials, r.k1_mean, r.k2_max), (0, 0.0, 0.0));
    assert!(cancellation_residuals(&with_head(0.0, -1.0, &tail[..4]), 6, 5, Seed(2)).is_err());
    assert!(cancellation_residuals(&with_head(0.5, 0.5, &tail), d, 5, Seed(2)).is_err());
}

#[test]
fn poly_g_residual_is_fifth_order() {
    for &(tau1, tau2, d) in &[(1.0, 1.0, 20usize), (0.3, 2.0, 7), (2.0, 0.0, 50), (0.0, 1.0, 3)] {
        for k in -750..=750 {
            let t = k as f64 * 1e-3;
            let r = poly_g_residual(t, tau1, tau2, d).unwrap();
            let bound = (d - 1) as f64 * (tau1 + tau2) * t.abs().powi(5);
            assert!(r <= bound + 1e-12 * d as f64, "t={t} residual {r} bound {bound}");
        }
    }
    let r = poly_g_residual(0.5, 1.0, 1.0, 20).unwrap();
    assert!(r <= 19.0 * 2.0 * 0.5f64.powi(5));
    for k in 1..=75 {
        let t = k as f64 * 1e-2;
        let a = poly_g_residual(t, 1.0, 1.0, 20).unwrap();
        let b = poly_g_residual(-t, 1.0, 1.0, 20).unwrap();
        assert!(a <= 2.0 * b + 1e-12 && b <= 2.0 * a + 1e-12, "t={t}: {a} vs {b}");
    }
    assert!(matches!(poly_g_residual(-0.76, 1.0, 1.0, 20), Err(Error::Domain(_))));
}

#[test]
fn poly_g_coefficients() {
    for &(tau1, tau2, d) in &[(1.0, 1.0, 20usize), (0.3, 2.0, 7), (5.0, 0.1, 1000)] {
        let g = PolyG::new(d, tau1, tau2);
        assert_eq!(g.coeffs[3], 0.0);
        let expected = (tau1 + tau2 / 2.0) / (std::f64::consts::PI * (d - 1) as f64);
        assert!((g.a2() - expected).abs() <= 1e-14 * expected.max(1.0));
        assert_eq!(g.eval(0.0), g.coeffs[0]);
    }
}

fn random_instance(rng: &mut impl Rng) -> (usize, Vec<Vec<f64>>, Vec<f64>) {
    let d = rng.gen_range(1..=10);
    let k = rng.gen_range(1..=5);
    let zs = (0..k).map(|_| signs(d, rng)).collect();
    let beta = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
    (d, zs, beta)
}

#[test]
fn cube_expectation_parity() {
    let mut rng = Seed(10).rng(1);
    let mut mixed = 0;
    for _ in 0..200 {
        let (d, zs, beta) = random_instance(&mut rng);
        let p = rng.gen_range(0..=6u32);
        let q = rng.gen_range(0..=6u32);
        let v = cube_exp_bruteforce(d, &zs, &beta, p, q).unwrap();
        if (p + q) % 2 == 1 {
            assert_eq!(v, 0.0, "p={p} q={q} d={d}");
            mixed += 1;
        } else {
            assert!(v >= -1e-12 * v.abs().max(1.0), "p={p} q={q} value {v}");
        }
    }
    assert!(mixed > 50);
    let mut rng = Seed(11).rng(1);
    for _ in 0..1000 {
        let (d, zs, beta) = random_instance(&mut rng);
        assert!(cube_exp_bruteforce(d, &zs, &beta, 2, 2).unwrap() >= 0.0);
    }
    let zs: Vec<Vec<f64>> = (0..4).map(|_| signs(8, &mut rng)).collect();
    assert_eq!(cube_exp_bruteforce(8, &zs, &[0.3, -1.0, 2.0, 0.7], 1, 2).unwrap(), 0.0);
    let beta = [0.3, -1.0, 2.0, 0.7];
    let v = cube_exp_bruteforce(8, &zs, &beta, 0, 0).unwrap();
    assert!((v - beta.iter().sum::<f64>().powi(2)).abs() < 1e-12);
    assert!(matches!(cube_exp_bruteforce(15, &[], &[], 1, 1), Err(Error::Scale(_))));
}

#[test]
fn mass_probe_on_a_fitted_kernel() {
    let d = 20;
    let n = d * d / 4;
    let data = sample_distribution_d(n, d, Seed(12)).unwrap();
    let reg = Dataset::regression(&data.design(), &data.targets()).unwrap();
    let model = fit_kernel_ridge(&reg, NtkConfig::default(), 1e-6).unwrap();
    let tails: Vec<Vec<f64>> = data.examples().iter().map(|e| e.x.as_slice()[2..].to_vec()).collect();
    let xs: Vec<Vec<f64>> = data.examples().iter().map(|e| e.x.as_slice().to_vec()).collect();
    let beta: Vec<f64> = model.beta.iter().copied().collect();
    let cfg = NtkConfig::default();
    let c = fit_symmetrization_constant(&xs, &beta, cfg, d, 500, Seed(13)).unwrap();
    let mut last = 1.0;
    for mult in [0.0, 0.5, 1.0, 1.5, 3.0] {
        let probe = f_tilde_mass_probe(&tails, &beta, cfg, d, c, mult, 2000, Seed(14)).unwrap();
        assert!(probe.estimate <= last);
        assert!(probe.wilson_low <= probe.estimate && probe.estimate <= probe.wilson_high);
        if mult == 1.5 {
            assert!(probe.estimate >= 0.05, "mass {}", probe.estimate);
        }
        last = probe.estimate;
    }
    let zero = f_tilde_mass_probe(&tails, &vec![0.0; n], cfg, d, c, 1.5, 100, Seed(1)).unwrap();
    assert_eq!((zero.threshold, zero.estimate), (0.0, 1.0));
}

proptest! {
    #[test]
    fn mixed_parity_vanishes(seed in any::<u64>(), p in 0u32..4, dq in 0u32..2) {
        let mut rng = Seed(seed).rng(3);
        let (d, zs, beta) = random_instance(&mut rng);
        let q = p + 2 * dq + 1;
        prop_assert_eq!(cube_exp_bruteforce(d, &zs, &beta, p, q).unwrap(), 0.0);
    }
}
