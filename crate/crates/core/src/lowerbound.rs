//! Numerical checks of the kernel lower-bound machinery on distribution D.
//!
//! Points of D split into a head `(x1, x2)` and a tail `z` in `{-1,+1}^{d-2}`. The headless
//! kernels evaluate `K1`/`K2` between `(0, 1, z')` and `(1, 0, z)`, which depend only on
//! `t = z^T z' / (d-1)`: `K~1 = (d-1) h1(t)` and `K~2 = (d-1) h2(t)` with
//! `h1(t) = t (1 - arccos(t)/pi)` and `h2(t) = sqrt(1 - t^2)/pi`.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::ntk::{self, NtkConfig};
use crate::rng::{tags, Seed};
use crate::stats;

pub fn h1(t: f64) -> f64 {
    let t = t.clamp(-1.0, 1.0);
    t * (1.0 - t.acos() / PI)
}

pub fn h2(t: f64) -> f64 {
    let t = t.clamp(-1.0, 1.0);
    (1.0 - t * t).max(0.0).sqrt() / PI
}

fn check_tail(z: &[f64], d: usize) -> Result<()> {
    if d < 3 || z.len() != d - 2 {
        return Err(Error::Dimension(format!("tail must have length d - 2 = {}, got {}", d.saturating_sub(2), z.len())));
    }
    if z.iter().any(|v| v.abs() != 1.0) {
        return Err(Error::Domain("tail entries must be exactly +-1".into()));
    }
    Ok(())
}

fn tail_t(z: &[f64], zp: &[f64], d: usize) -> Result<f64> {
    check_tail(z, d)?;
    check_tail(zp, d)?;
    Ok(z.iter().zip(zp).map(|(a, b)| a * b).sum::<f64>() / (d - 1) as f64)
}

/// `K1((0, 1, z'), (1, 0, z))` through the closed form.
pub fn ktilde1(z: &[f64], zp: &[f64], d: usize) -> Result<f64> {
    Ok((d - 1) as f64 * h1(tail_t(z, zp, d)?))
}

/// `K2((0, 1, z'), (1, 0, z))` through the closed form.
pub fn ktilde2(z: &[f64], zp: &[f64], d: usize) -> Result<f64> {
    Ok((d - 1) as f64 * h2(tail_t(z, zp, d)?))
}

/// Builds `(a, b, z)` in `R^d`.
pub fn with_head(a: f64, b: f64, z: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(z.len() + 2);
    v.push(a);
    v.push(b);
    v.extend_from_slice(z);
    v
}

/// `f~(z) = tau1 sum beta_i K~1(z_i, z) + tau2 sum beta_i (K~1(z_i, z) + K~2(z_i, z))`.
pub fn f_tilde(z: &[f64], support: &[Vec<f64>], beta: &[f64], tau1: f64, tau2: f64, d: usize) -> Result<f64> {
    if support.len() != beta.len() {
        return Err(Error::Dimension("support and beta lengths differ".into()));
    }
    let mut s = 0.0;
    for (zi, b) in support.iter().zip(beta) {
        let k1 = ktilde1(zi, z, d)?;
        let k2 = ktilde2(zi, z, d)?;
        s += b * ((tau1 + tau2) * k1 + tau2 * k2);
    }
    Ok(s)
}

/// Kernel predictor over full points `xs` of D.
fn f_full(x: &[f64], xs: &[Vec<f64>], beta: &[f64], cfg: NtkConfig) -> Result<f64> {
    let mut s = 0.0;
    for (xi, b) in xs.iter().zip(beta) {
        s += b * ntk::ntk(xi, x, cfg)?;
    }
    Ok(s)
}

/// `(|f+(z) - 2 f~(z)|, |f-(z) - 2 f~(z)|)` where `f+` sums the predictor over heads `(+-1, 0)`
/// and `f-` over heads `(0, +-1)`; `xs` are full points of D and `f~` uses their tails.
pub fn symmetrization_gaps(z: &[f64], xs: &[Vec<f64>], beta: &[f64], cfg: NtkConfig, d: usize) -> Result<(f64, f64)> {
    let tails: Vec<Vec<f64>> = xs.iter().map(|x| x[2..].to_vec()).collect();
    let ft = f_tilde(z, &tails, beta, cfg.tau1, cfg.tau2, d)?;
    let fp = f_full(&with_head(1.0, 0.0, z), xs, beta, cfg)? + f_full(&with_head(-1.0, 0.0, z), xs, beta, cfg)?;
    let fm = f_full(&with_head(0.0, 1.0, z), xs, beta, cfg)? + f_full(&with_head(0.0, -1.0, z), xs, beta, cfg)?;
    Ok(((fp - 2.0 * ft).abs(), (fm - 2.0 * ft).abs()))
}

fn random_tail(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// Empirical constant `c` such that the 99th percentile of the symmetrization gaps equals
/// `c (tau1 + tau2) / d * sum |beta_i|`.
pub fn fit_symmetrization_constant(xs: &[Vec<f64>], beta: &[f64], cfg: NtkConfig, d: usize, trials: usize, seed: Seed) -> Result<f64> {
    let scale = (cfg.tau1 + cfg.tau2) / d as f64 * beta.iter().map(|b| b.abs()).sum::<f64>();
    if scale == 0.0 || trials == 0 {
        return Ok(0.0);
    }
    let mut gaps = Vec::with_capacity(2 * trials);
    for i in 0..trials as u64 {
        let mut rng = seed.rng_at(tags::LOWERBOUND, i);
        let z = random_tail(d - 2, &mut rng);
        let (a, b) = symmetrization_gaps(&z, xs, beta, cfg, d)?;
        gaps.push(a);
        gaps.push(b);
    }
    Ok(stats::quantile(&gaps, 0.99) / scale)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualStats {
    pub trials: usize,
    pub k1_mean: f64,
    pub k1_max: f64,
    pub k2_mean: f64,
    pub k2_max: f64,
}

/// Residuals `|K(x, (1,0,z)) + K(x, (-1,0,z)) - 2 K~(x_tail, z)|` for `K1` and `K2` over random
/// tails `z`. With zero trials every statistic is zero.
pub fn cancellation_residuals(x: &[f64], d: usize, trials: usize, seed: Seed) -> Result<ResidualStats> {
    if d < 8 {
        return Err(Error::Dimension(format!("need d >= 8, got {d}")));
    }
    if x.len() != d {
        return Err(Error::Dimension(format!("point has length {}, expected {d}", x.len())));
    }
    let xt = &x[2..];
    check_tail(xt, d)?;
    if x[0] * x[1] != 0.0 || x[0].abs() + x[1].abs() != 1.0 {
        return Err(Error::Domain("point is not in the support of D".into()));
    }
    let mut r1 = Vec::with_capacity(trials);
    let mut r2 = Vec::with_capacity(trials);
    for i in 0..trials as u64 {
        let mut rng = seed.rng_at(tags::LOWERBOUND, i);
        let z = random_tail(d - 2, &mut rng);
        let p = with_head(1.0, 0.0, &z);
        let m = with_head(-1.0, 0.0, &z);
        // The headless reference is evaluated on the lifted pair so that a zero first head
        // coordinate cancels bit for bit.
        let xh = with_head(0.0, 1.0, xt);
        let e1 = ntk::k1(x, &p)? + ntk::k1(x, &m)? - 2.0 * ntk::k1(&xh, &p)?;
        let e2 = ntk::k2(x, &p)? + ntk::k2(x, &m)? - 2.0 * ntk::k2(&xh, &p)?;
        r1.push(e1.abs());
        r2.push(e2.abs());
    }
    if trials == 0 {
        return Ok(ResidualStats { trials, k1_mean: 0.0, k1_max: 0.0, k2_mean: 0.0, k2_max: 0.0 });
    }
    Ok(ResidualStats {
        trials,
        k1_mean: stats::mean(&r1),
        k1_max: r1.iter().copied().fold(0.0, f64::max),
        k2_mean: stats::mean(&r2),
        k2_max: r2.iter().copied().fold(0.0, f64::max),
    })
}

/// The quartic `g(x) = tau1 (d-1) (x/2 + x^2/pi + x^4/(6 pi)) + tau2 (d-1) (1/pi + x/2 + x^2/(2 pi) + x^4/(24 pi))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyG {
    pub d: usize,
    pub tau1: f64,
    pub tau2: f64,
    /// Coefficients of `1, x, x^2, x^3, x^4`.
    pub coeffs: [f64; 5],
}

impl PolyG {
    pub fn new(d: usize, tau1: f64, tau2: f64) -> Self {
        let s = (d - 1) as f64;
        let coeffs = [
            s * (tau2 * (1.0 / PI)),
            (tau1 + tau2) * s / 2.0,
            tau1 * s / PI + tau2 * s / (2.0 * PI),
            0.0,
            tau1 * s / (6.0 * PI) + tau2 * s / (24.0 * PI),
        ];
        PolyG { d, tau1, tau2, coeffs }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// Coefficient of `x^2` in `g(x / (d-1))`.
    pub fn a2(&self) -> f64 {
        let s = (self.d - 1) as f64;
        self.coeffs[2] / (s * s)
    }
}

/// `|g(t) - (d-1) [(tau1 + tau2) h1(t) + tau2 h2(t)]|` for `|t| <= 3/4`.
pub fn poly_g_residual(t: f64, tau1: f64, tau2: f64, d: usize) -> Result<f64> {
    if !(t.abs() <= 0.75) {
        return Err(Error::Domain(format!("|t| must be at most 0.75, got {t}")));
    }
    if d < 2 {
        return Err(Error::Dimension("need d >= 2".into()));
    }
    let g = PolyG::new(d, tau1, tau2);
    let exact = (d - 1) as f64 * ((tau1 + tau2) * h1(t) + tau2 * h2(t));
    Ok((g.eval(t) - exact).abs())
}

/// Largest dimension accepted by [`cube_exp_bruteforce`].
pub const MAX_CUBE_DIM: usize = 14;

/// `E_z[(sum_i beta_i (z^T z_i)^q) (sum_i beta_i (z^T z_i)^p)]` over all `z` in `{-1,+1}^d`.
///
/// Points are visited in antipodal pairs `(z, -z)`; each pair is summed first and the pair sums
/// are accumulated with compensation. When exactly one of `p`, `q` is odd the two members of a
/// pair are exact negatives, so the result is exactly zero.
pub fn cube_exp_bruteforce(d: usize, zs: &[Vec<f64>], beta: &[f64], p: u32, q: u32) -> Result<f64> {
    if d > MAX_CUBE_DIM {
        return Err(Error::Scale(format!("d = {d} exceeds {MAX_CUBE_DIM}")));
    }
    if d == 0 {
        return Err(Error::Dimension("need d >= 1".into()));
    }
    if p > 6 || q > 6 {
        return Err(Error::Domain("exponents must be at most 6".into()));
    }
    if zs.len() != beta.len() {
        return Err(Error::Dimension("support and beta lengths differ".into()));
    }
    if zs.iter().any(|z| z.len() != d) {
        return Err(Error::Dimension(format!("every support point must have length {d}")));
    }
    let value = |sign: f64, mask: u32| -> (f64, f64) {
        let mut a = 0.0;
        let mut b = 0.0;
        for (zi, bi) in zs.iter().zip(beta) {
            let mut s = 0.0;
            for (k, v) in zi.iter().enumerate() {
                let zk = if k == 0 || mask & (1 << (k - 1)) == 0 { sign } else { -sign };
                s += zk * v;
            }
            a += bi * s.powi(q as i32);
            b += bi * s.powi(p as i32);
        }
        (a, b)
    };
    let half = 1u32 << (d - 1);
    let pairs = (0..half).map(|mask| {
        let (a, b) = value(1.0, mask);
        let (c, e) = value(-1.0, mask);
        a * b + c * e
    });
    Ok(stats::compensated_sum(pairs) / (1u64 << d) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassProbe {
    pub threshold: f64,
    pub successes: usize,
    pub trials: usize,
    pub estimate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

/// Monte Carlo estimate of `Pr_z(|f~(z)| >= multiplier * c (tau1 + tau2) / d * sum |beta_i|)`
/// with a 95% Wilson interval; the natural multiplier is 3/2.
#[allow(clippy::too_many_arguments)]
pub fn f_tilde_mass_probe(
    support: &[Vec<f64>],
    beta: &[f64],
    cfg: NtkConfig,
    d: usize,
    c: f64,
    multiplier: f64,
    trials: usize,
    seed: Seed,
) -> Result<MassProbe> {
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let threshold = multiplier * c * (cfg.tau1 + cfg.tau2) / d as f64 * l1;
    let mut hits = 0;
    for i in 0..trials as u64 {
        let mut rng = seed.rng_at(tags::LOWERBOUND, 1 << 40 | i);
        let z = random_tail(d - 2, &mut rng);
        if f_tilde(&z, support, beta, cfg.tau1, cfg.tau2, d)?.abs() >= threshold {
            hits += 1;
        }
    }
    let (lo, hi) = stats::wilson_interval(hits, trials, 1.959_963_984_540_054);
    let estimate = if trials == 0 { f64::NAN } else { hits as f64 / trials as f64 };
    Ok(MassProbe { threshold, successes: hits, trials, estimate, wilson_low: lo, wilson_high: hi })
}

/// Random tail vector helper for callers that need D-like tails.
pub fn sample_tail(d: usize, seed: Seed, index: u64) -> DVector<f64> {
    let mut rng = seed.rng_at(tags::LOWERBOUND, (1 << 41) | index);
    DVector::from_vec(random_tail(d - 2, &mut rng))
}
