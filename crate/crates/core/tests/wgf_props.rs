use marginlab::data::{sample_distribution_d, Dataset};
use marginlab::wgf::{
    distributional_loss, l_prime, run, second_moment_bound, step, step_with, uniform_sphere, velocity,
    window_increase_bound, FrozenField, ParticleEnsemble, WgfConfig, WgfData,
};
use marginlab::{Error, Seed};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn d_data(n: usize, d: usize, seed: u64) -> WgfData {
    WgfData::new(&sample_distribution_d(n, d, Seed(seed)).unwrap()).unwrap()
}

fn small_cfg() -> WgfConfig {
    WgfConfig { sigma: 1e-2, eta: 1e-2, lambda: 1e-3, inject_count: 3, steps: 200, max_particles: 60, grace_steps: 10, ..WgfConfig::default() }
}

#[test]
fn loss_trivial_values() {
    let data = d_data(10, 5, 1);
    let u = DVector::from_vec(vec![0.0, 1.0, -2.0, 0.5, 0.0, 3.0]);
    let mut ens = ParticleEnsemble::uniform(vec![u.clone()]).unwrap();
    ens.particles[0].weight = 0.4;
    let l = distributional_loss(&ens, &data, 0.1).unwrap();
    assert!((l - (10.0 * 2f64.ln() + 0.4 * 0.1 * u.norm_squared())).abs() < 1e-12);

    let ens = ParticleEnsemble::gaussian(20, 5, 1.0, Seed(2)).unwrap();
    let mut doubled = ens.clone();
    for p in &mut doubled.particles {
        p.theta *= 2.0;
    }
    assert_eq!(doubled.second_moment(), 4.0 * ens.second_moment());
    let bad = ParticleEnsemble::gaussian(2, 3, 1.0, Seed(2)).unwrap();
    assert!(matches!(distributional_loss(&bad, &data, 0.1), Err(Error::Dimension(_))));
}

#[test]
fn first_variation_at_origin_vanishes() {
    let data = d_data(10, 5, 1);
    let ens = ParticleEnsemble::gaussian(20, 5, 1.0, Seed(2)).unwrap();
    let z = DVector::zeros(6);
    assert_eq!(l_prime(&ens, &data, 1e-3, &z).unwrap(), 0.0);
    assert_eq!(velocity(&ens, &data, 1e-3, &z).unwrap().amax(), 0.0);
}

/// Smallest |u^T x_i| over the data.
fn kink_gap(data: &Dataset, theta: &DVector<f64>) -> f64 {
    let u = theta.rows(1, theta.len() - 1);
    data.examples().iter().map(|e| u.dot(&e.x).abs()).fold(f64::INFINITY, f64::min)
}

#[test]
fn velocity_matches_finite_differences() {
    let raw = sample_distribution_d(16, 5, Seed(3)).unwrap();
    let data = WgfData::new(&raw).unwrap();
    let ens = ParticleEnsemble::gaussian(30, 5, 1.0, Seed(4)).unwrap();
    let field = FrozenField::new(&ens, &data, 0.05).unwrap();
    let mut rng = Seed(5).rng(1);
    let mut checked = 0;
    while checked < 20 {
        let theta = DVector::from_fn(6, |_, _| rng.gen_range(-1.5..1.5));
        if kink_gap(&raw, &theta) < 1e-3 {
            continue;
        }
        let v = field.velocity(&data, &theta).unwrap();
        let h = 1e-6;
        let fd = DVector::from_fn(6, |k, _| {
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[k] += h;
            b[k] -= h;
            -(field.l_prime(&data, &a).unwrap() - field.l_prime(&data, &b).unwrap()) / (2.0 * h)
        });
        assert!((&v - &fd).norm() <= 1e-5 * fd.norm().max(1e-8), "{v} vs {fd}");
        checked += 1;
    }
}

#[test]
fn first_variation_is_bounded_on_the_sphere() {
    let data = d_data(32, 5, 6);
    let lambda = 1e-3;
    let c = data.constants(lambda);
    let mut rng = Seed(7).rng(1);
    for s in 0..20 {
        let ens = ParticleEnsemble::gaussian(40, 5, 0.5 + s as f64, Seed(s)).unwrap();
        let field = FrozenField::new(&ens, &data, lambda).unwrap();
        for _ in 0..50 {
            let t = uniform_sphere(6, &mut rng);
            assert!(field.l_prime(&data, &t).unwrap().abs() <= c.b_l);
        }
    }
}

#[test]
fn radial_derivative_identity() {
    let raw = sample_distribution_d(16, 5, Seed(8)).unwrap();
    let data = WgfData::new(&raw).unwrap();
    let ens = ParticleEnsemble::gaussian(30, 5, 1.0, Seed(9)).unwrap();
    let field = FrozenField::new(&ens, &data, 0.01).unwrap();
    let mut rng = Seed(10).rng(1);
    for _ in 0..50 {
        let theta = DVector::from_fn(6, |_, _| rng.gen_range(-2.0..2.0));
        if kink_gap(&raw, &theta) < 1e-6 {
            continue;
        }
        let r = theta.norm();
        let bar = &theta / r;
        let grad = -field.velocity(&data, &theta).unwrap();
        let lhs = bar.dot(&grad);
        let rhs = 2.0 * r * field.l_prime(&data, &bar).unwrap();
        assert!((lhs - rhs).abs() <= 1e-6 * rhs.abs().max(1e-10), "{lhs} vs {rhs}");
    }
}

#[test]
fn zero_field_without_noise_leaves_ensemble_unchanged() {
    let ens = ParticleEnsemble::gaussian(10, 3, 1.0, Seed(1)).unwrap();
    let cfg = WgfConfig { sigma: 0.0, ..WgfConfig::default() };
    let next = step_with(&ens, |_| Ok(DVector::zeros(4)), 4, &cfg, Seed(1), 0).unwrap();
    assert_eq!(next, ens);
}

#[test]
fn pure_transport_preserves_mass_exactly() {
    let data = d_data(12, 4, 2);
    let ens = ParticleEnsemble::gaussian(16, 4, 1.0, Seed(3)).unwrap();
    let cfg = WgfConfig { sigma: 0.0, ..WgfConfig::default() };
    let next = step(&ens, &data, &cfg, Seed(1), 0).unwrap();
    assert_eq!(next.len(), 16);
    let w: Vec<f64> = next.particles.iter().map(|p| p.weight).collect();
    assert!(w.iter().all(|&v| v == 1.0 / 16.0) || (next.total_mass() - 1.0).abs() < 1e-15);
}

#[test]
fn one_noisy_step_splits_mass() {
    let data = d_data(12, 4, 2);
    let ens = ParticleEnsemble::gaussian(16, 4, 1.0, Seed(3)).unwrap();
    let cfg = WgfConfig { sigma: 0.5, eta: 0.1, inject_count: 5, ..WgfConfig::default() };
    let next = step(&ens, &data, &cfg, Seed(1), 0).unwrap();
    let old: f64 = next.particles[..16].iter().map(|p| p.weight).sum();
    let new: f64 = next.particles[16..].iter().map(|p| p.weight).sum();
    assert_eq!(next.len(), 21);
    assert!((old - 0.95).abs() < 1e-14 && (new - 0.05).abs() < 1e-14);
    assert!(next.particles[16..].iter().all(|p| (p.theta.norm() - 1.0).abs() < 1e-12 && p.born == 1));
}

#[test]
fn non_finite_particle_is_named() {
    let ens = ParticleEnsemble::gaussian(5, 3, 1.0, Seed(1)).unwrap();
    let first = ens.particles[2].theta.clone();
    let r = step_with(
        &ens,
        |t| Ok(if *t == first { DVector::from_element(4, f64::NAN) } else { DVector::zeros(4) }),
        4,
        &WgfConfig::default(),
        Seed(1),
        0,
    );
    assert!(matches!(r, Err(Error::ParticleNonFinite { index: 2 })));
    let bad = WgfConfig { eta: 2.0, sigma: 0.5, ..WgfConfig::default() };
    assert!(matches!(step_with(&ens, |_| Ok(DVector::zeros(4)), 4, &bad, Seed(1), 0), Err(Error::Config(_))));
}

#[test]
fn short_run_respects_diagnostics() {
    let data = d_data(16, 4, 11);
    let cfg = small_cfg();
    let ens = ParticleEnsemble::gaussian(40, 4, 0.5, Seed(12)).unwrap();
    let out = run(&ens, &data, &cfg, Seed(13)).unwrap();
    assert_eq!(out.trace.len(), cfg.steps + 1);
    let c = data.constants(cfg.lambda);
    let l0 = out.trace[0].loss;
    let w_max = out.trace.iter().map(|r| r.second_moment).fold(0.0, f64::max);
    for (t, row) in out.trace.iter().enumerate() {
        assert!((row.total_mass - 1.0).abs() <= 1e-6, "mass {} at {t}", row.total_mass);
        assert!(row.n_particles <= cfg.max_particles.max(40 + t * cfg.inject_count).min(cfg.max_particles + cfg.inject_count * cfg.grace_steps + 40));
        if t > cfg.grace_steps + 20 {
            assert!(row.n_particles <= cfg.max_particles);
        }
        if let Some(b) = second_moment_bound(l0, t, &cfg, &c) {
            assert!(row.second_moment <= b);
        }
        for k in 1..=100.min(cfg.steps - t.min(cfg.steps)) {
            let inc = out.trace[t + k].loss - row.loss;
            assert!(inc <= window_increase_bound(k, w_max, &cfg, &c, 1e-3), "t={t} k={k} inc={inc}");
        }
    }
    assert!(out.trace.windows(2).all(|w| w[1].min_loss <= w[0].min_loss));
    let zero = run(&ens, &data, &WgfConfig { steps: 0, ..cfg }, Seed(13)).unwrap();
    assert_eq!(zero.trace.len(), 1);
    assert_eq!(zero.ensemble, ens);
}

#[test]
fn runs_are_reproducible() {
    let data = d_data(8, 3, 1);
    let ens = ParticleEnsemble::gaussian(10, 3, 1.0, Seed(1)).unwrap();
    let cfg = WgfConfig { steps: 30, ..small_cfg() };
    let a = run(&ens, &data, &cfg, Seed(4)).unwrap();
    let b = run(&ens, &data, &cfg, Seed(4)).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.ensemble, b.ensemble);
}

#[test]
fn mass_grows_in_a_descent_cap() {
    // Static first variation L'(theta) = -tau (theta^T e)^2. On the cap {theta^T e >= cos(a) |theta|}
    // it is at most -tau cos(a)^2 on the unit sphere, and its velocity 2 tau (theta^T e) e
    // keeps particles inside the cap.
    let dim = 4;
    let tau = 0.5;
    let cos_a = 0.8f64;
    let e = DVector::from_fn(dim, |k, _| if k == 0 { 1.0 } else { 0.0 });
    let tau_cap = tau * cos_a * cos_a;
    let in_cap = |t: &DVector<f64>| t.dot(&e) >= cos_a * t.norm();
    let cap_moment = |ens: &ParticleEnsemble| -> f64 {
        ens.particles.iter().filter(|p| in_cap(&p.theta)).map(|p| p.weight * p.theta.norm_squared()).sum()
    };
    let mut rng = Seed(3).rng(2);
    let thetas: Vec<DVector<f64>> = (0..200).map(|_| uniform_sphere(dim, &mut rng)).collect();
    let mut ens = ParticleEnsemble::uniform(thetas).unwrap();
    let cfg = WgfConfig { sigma: 0.1, eta: 0.05, inject_count: 4, max_particles: 1_000_000, ..WgfConfig::default() };
    let field = |t: &DVector<f64>| Ok(&e * (2.0 * tau * t.dot(&e)));
    let mut prev = cap_moment(&ens);
    assert!(prev > 0.0);
    for s in 0..40 {
        // Frozen field, no renormalization effect: check weights before the global rescale
        // by comparing against the mass-preserving update.
        ens = step_with(&ens, field, dim, &cfg, Seed(9), s).unwrap();
        let now = cap_moment(&ens);
        let ratio = now / prev;
        assert!(ratio >= (1.0 - cfg.eta * cfg.sigma) * (1.0 + cfg.eta * tau_cap), "step {s}: ratio {ratio}");
        prev = now;
    }
}

proptest! {
    #[test]
    fn first_variation_is_two_homogeneous(seed in 0u64..500, ci in 0usize..2) {
        let c = [0.5, 2.0][ci];
        let data = d_data(10, 4, seed);
        let ens = ParticleEnsemble::gaussian(12, 4, 1.0, Seed(seed)).unwrap();
        let field = FrozenField::new(&ens, &data, 0.02).unwrap();
        let mut rng = Seed(seed).rng(7);
        let theta = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
        let a = field.l_prime(&data, &(&theta * c)).unwrap();
        let b = c * c * field.l_prime(&data, &theta).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-12));
    }
}

#[test]
fn rejects_non_binary_data() {
    let x = DMatrix::from_element(2, 3, 1.0);
    let reg = Dataset::regression(&x, &[0.1, 0.2, 0.3]).unwrap();
    assert!(WgfData::new(&reg).is_err());
}
