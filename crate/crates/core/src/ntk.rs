//! Closed-form tangent kernel of a two-layer relu network.
//!
//! `K1(x, x') = <x, x'> (1 - arccos(cos)/pi)` comes from the top-layer-gradient term,
//! `K2(x, x') = |x||x'| sqrt(1 - cos^2) / pi` completes the bottom-layer term, and the
//! kernel is the mixture `tau1 K1 + tau2 (K1 + K2)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, LabelKind};
use crate::error::{Error, Result};
use crate::stats::{sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NtkConfig {
    pub tau1: f64,
    pub tau2: f64,
}

impl Default for NtkConfig {
    fn default() -> Self {
        NtkConfig { tau1: 1.0, tau2: 1.0 }
    }
}

impl NtkConfig {
    pub fn new(tau1: f64, tau2: f64) -> Result<Self> {
        if !(tau1 >= 0.0 && tau2 >= 0.0 && tau1 + tau2 > 0.0) || !tau1.is_finite() || !tau2.is_finite() {
            return Err(Error::Domain(format!("need tau1, tau2 >= 0 with positive sum, got ({tau1}, {tau2})")));
        }
        Ok(NtkConfig { tau1, tau2 })
    }
}

/// Inner product, norms, angle and sine of the angle between two vectors.
///
/// The angle comes from `2 atan2(|a - b|, |a + b|)` on the unit vectors, which stays accurate
/// for nearly parallel or antiparallel inputs where `arccos` of a rounded cosine does not.
fn geometry(x: &[f64], xp: &[f64]) -> Result<(f64, f64, f64, f64, f64)> {
    if x.len() != xp.len() {
        return Err(Error::Dimension(format!("{} vs {}", x.len(), xp.len())));
    }
    let mut dot = 0.0;
    let mut nx = 0.0;
    let mut np = 0.0;
    for (a, b) in x.iter().zip(xp) {
        dot += a * b;
        nx += a * a;
        np += b * b;
    }
    let (nx, np) = (nx.sqrt(), np.sqrt());
    if nx == 0.0 || np == 0.0 || !nx.is_finite() || !np.is_finite() {
        return Err(Error::Degenerate("zero-norm input to kernel".into()));
    }
    let mut diff = 0.0;
    let mut sum = 0.0;
    for (a, b) in x.iter().zip(xp) {
        let (ua, ub) = (a / nx, b / np);
        diff += (ua - ub) * (ua - ub);
        sum += (ua + ub) * (ua + ub);
    }
    // Half-angle sine and cosine, up to a common factor.
    let (s, c) = (diff.sqrt(), sum.sqrt());
    let angle = 2.0 * s.atan2(c);
    let sin = 2.0 * s * c / (s * s + c * c);
    Ok((dot, nx, np, angle, sin))
}

/// `K1(x, x')`.
pub fn k1(x: &[f64], xp: &[f64]) -> Result<f64> {
    let (dot, _, _, angle, _) = geometry(x, xp)?;
    Ok(dot * (1.0 - angle / PI))
}

/// `K2(x, x')`; always non-negative.
pub fn k2(x: &[f64], xp: &[f64]) -> Result<f64> {
    let (_, nx, np, _, sin) = geometry(x, xp)?;
    Ok(nx * np / PI * sin)
}

/// The mixed kernel. Symmetric bit-for-bit: every intermediate is a symmetric expression.
pub fn ntk(x: &[f64], xp: &[f64], cfg: NtkConfig) -> Result<f64> {
    let (dot, nx, np, angle, sin) = geometry(x, xp)?;
    let a = dot * (1.0 - angle / PI);
    let b = nx * np / PI * sin;
    Ok(cfg.tau1 * a + cfg.tau2 * (a + b))
}

/// Gram matrix over a dataset, each unordered pair evaluated once.
pub fn gram(data: &Dataset, cfg: NtkConfig) -> Result<DMatrix<f64>> {
    let n = data.n();
    for i in 0..n {
        if data.x(i).norm() == 0.0 {
            return Err(Error::Degenerate(format!("example {i} has zero norm")));
        }
    }
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = ntk(data.x(i).as_slice(), data.x(j).as_slice(), cfg)?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Cross-kernel matrix `K[i][j] = ntk(a_i, b_j)`.
pub fn cross_gram(a: &Dataset, b: &Dataset, cfg: NtkConfig) -> Result<DMatrix<f64>> {
    if a.d() != b.d() {
        return Err(Error::Dimension(format!("{} vs {}", a.d(), b.d())));
    }
    let mut k = DMatrix::zeros(a.n(), b.n());
    for i in 0..a.n() {
        for j in 0..b.n() {
            k[(i, j)] = ntk(a.x(i).as_slice(), b.x(j).as_slice(), cfg)?;
        }
    }
    Ok(k)
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn power_iteration(g: &DMatrix<f64>, iters: usize) -> f64 {
    let n = g.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lam = 0.0;
    for _ in 0..iters {
        let w = g * &v;
        let nrm = w.norm();
        if nrm == 0.0 {
            return 0.0;
        }
        lam = v.dot(&w);
        v = w / nrm;
    }
    lam.max((g * &v).norm())
}

#[derive(Debug, Clone)]
pub struct KernelModel {
    pub beta: DVector<f64>,
    pub support: Dataset,
    pub config: NtkConfig,
    /// Objective value after each gradient step (empty for closed-form fits).
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct KernelLogisticConfig {
    pub reg: f64,
    pub steps: usize,
    /// `None` selects `n / lambda_max(G)` with `lambda_max` from 20 power iterations.
    pub lr: Option<f64>,
}

/// Fits `beta` for the objective
/// `(1/n) sum log(1 + exp(-y_i (G beta)_i)) + reg * beta^T G beta`
/// by full-batch gradient descent in the kernel's own geometry: each step moves the predictor
/// `f = G beta` along the functional gradient, i.e. `beta -= lr * (dL/df + 2 reg beta)`.
pub fn fit_kernel_logistic(data: &Dataset, cfg: NtkConfig, fit: KernelLogisticConfig) -> Result<KernelModel> {
    if data.kind() != LabelKind::Binary {
        return Err(Error::Domain("kernel logistic fit needs binary labels".into()));
    }
    if fit.reg < 0.0 {
        return Err(Error::Domain("reg must be >= 0".into()));
    }
    let g = gram(data, cfg)?;
    let n = data.n();
    let y = DVector::from_vec(data.targets());
    let lr = match fit.lr {
        Some(v) => v,
        None => {
            let lmax = power_iteration(&g, 20);
            if lmax <= 0.0 {
                return Err(Error::Degenerate("Gram matrix has no positive eigenvalue".into()));
            }
            n as f64 / lmax
        }
    };
    let mut beta = DVector::zeros(n);
    let mut f = DVector::zeros(n);
    let mut trace = Vec::with_capacity(fit.steps);
    for step in 0..fit.steps {
        let mut dir = DVector::zeros(n);
        for i in 0..n {
            dir[i] = -y[i] * sigmoid(-y[i] * f[i]) / n as f64 + 2.0 * fit.reg * beta[i];
        }
        beta -= dir * lr;
        f = &g * &beta;
        let data_term: f64 = (0..n).map(|i| softplus(-y[i] * f[i])).sum::<f64>() / n as f64;
        let loss = data_term + fit.reg * beta.dot(&f);
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        trace.push(loss);
    }
    Ok(KernelModel { beta, support: data.clone(), config: cfg, loss_trace: trace })
}

/// Kernel ridge regression: `beta = (G + ridge * n * I)^-1 y`.
pub fn fit_kernel_ridge(data: &Dataset, cfg: NtkConfig, ridge: f64) -> Result<KernelModel> {
    if !(ridge > 0.0) {
        return Err(Error::Domain("ridge must be > 0".into()));
    }
    if data.kind() == LabelKind::Binary || matches!(data.kind(), LabelKind::Multiclass(_)) {
        return Err(Error::Domain("kernel ridge fit needs regression labels".into()));
    }
    let n = data.n();
    let mut a = gram(data, cfg)?;
    for i in 0..n {
        a[(i, i)] += ridge * n as f64;
    }
    let y = DVector::from_vec(data.targets());
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Singular("G + ridge*n*I is not positive definite".into()))?;
    let beta = chol.solve(&y);
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite solution".into()));
    }
    Ok(KernelModel { beta, support: data.clone(), config: cfg, loss_trace: Vec::new() })
}

/// `sum_i beta_i K(x_i, x)`.
pub fn predict_kernel(model: &KernelModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.support.d() {
        return Err(Error::Dimension(format!("expected {}, got {}", model.support.d(), x.len())));
    }
    let mut s = 0.0;
    for (i, b) in model.beta.iter().enumerate() {
        if *b != 0.0 {
            s += b * ntk(model.support.x(i).as_slice(), x, model.config)?;
        }
    }
    Ok(s)
}

/// Fraction of examples whose prediction sign disagrees with the ±1 label (0 counts as wrong).
pub fn kernel_test_error(model: &KernelModel, test: &Dataset) -> Result<f64> {
    let y = test.targets();
    let mut wrong = 0usize;
    for i in 0..test.n() {
        if predict_kernel(model, test.x(i).as_slice())? * y[i] <= 0.0 {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / test.n() as f64)
}

/// Mean of `min((y - f)^2, 1)` on a regression test set.
pub fn kernel_truncated_squared_loss(model: &KernelModel, test: &Dataset) -> Result<f64> {
    let y = test.targets();
    let mut s = 0.0;
    for i in 0..test.n() {
        let r = y[i] - predict_kernel(model, test.x(i).as_slice())?;
        s += (r * r).min(1.0);
    }
    Ok(s / test.n() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_edge_values() {
        let x = [1.0, 2.0, -0.5];
        let nx2 = 1.0 + 4.0 + 0.25;
        assert_relative_eq!(k1(&x, &x).unwrap(), nx2, max_relative = 1e-14);
        assert_eq!(k2(&x, &x).unwrap(), 0.0);
        let mx = [-1.0, -2.0, 0.5];
        assert_eq!(k1(&x, &mx).unwrap(), 0.0);
        assert!(k2(&x, &mx).unwrap().abs() < 1e-15);
        let a = [1.0, 0.0];
        let b = [0.0, 3.0];
        assert_eq!(k1(&a, &b).unwrap(), 0.0);
        assert_relative_eq!(k2(&a, &b).unwrap(), 3.0 / PI, max_relative = 1e-14);
        let c = NtkConfig::new(1.0, 1.0).unwrap();
        assert_relative_eq!(ntk(&x, &x, c).unwrap(), 2.0 * nx2, max_relative = 1e-14);
    }

    #[test]
    fn zero_norm_rejected() {
        assert!(matches!(k1(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn ridge_single_point() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let d = Dataset::regression(&x, &[3.0]).unwrap();
        let c = NtkConfig::default();
        let m = fit_kernel_ridge(&d, c, 0.5).unwrap();
        let g11 = 2.0 * 5.0;
        assert_relative_eq!(m.beta[0], 3.0 / (g11 + 0.5), max_relative = 1e-12);
    }
}
