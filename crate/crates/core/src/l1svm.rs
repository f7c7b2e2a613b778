//! l1-norm max-margin classifier over relu features `[u^T x]+` on a finite set of
//! directions, and the conversion between sparse feature weights and two-layer networks.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{Dataset, LabelKind};
use crate::error::{Error, Result};
use crate::net::NetParams;
use crate::simplex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Explicit,
    /// Directions `(w, b)` on the unit circle for scalar inputs lifted to `(x, 1)`.
    OneD { resolution: usize },
    /// Quasi-uniform points on the sphere.
    Fibonacci { count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    directions: Vec<DVector<f64>>,
    kind: GridKind,
}

impl FeatureGrid {
    /// Normalizes the given directions.
    pub fn explicit(dirs: Vec<DVector<f64>>) -> Result<Self> {
        let dim = dirs.first().map(|v| v.len()).ok_or_else(|| Error::Degenerate("empty grid".into()))?;
        let mut out = Vec::with_capacity(dirs.len());
        for (k, v) in dirs.into_iter().enumerate() {
            if v.len() != dim {
                return Err(Error::Dimension(format!("direction {k} has length {}", v.len())));
            }
            let nrm = v.norm();
            if nrm == 0.0 || !nrm.is_finite() {
                return Err(Error::Degenerate(format!("direction {k} has zero norm")));
            }
            out.push(v / nrm);
        }
        Ok(FeatureGrid { directions: out, kind: GridKind::Explicit })
    }

    /// `resolution` evenly spaced angles on the unit circle, read as `(w, b)`.
    pub fn one_d(resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::Degenerate("grid resolution must be positive".into()));
        }
        let directions = (0..resolution)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / resolution as f64;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect();
        Ok(FeatureGrid { directions, kind: GridKind::OneD { resolution } })
    }

    /// `count` quasi-uniform directions in `R^dim`: evenly spaced on the circle for `dim = 2`,
    /// the golden-angle spiral for `dim = 3`, and a low-discrepancy additive sequence pushed
    /// through the Gaussian quantile function and normalized for `dim >= 4`.
    pub fn fibonacci(dim: usize, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::Degenerate("grid needs at least one direction".into()));
        }
        let directions = match dim {
            0 | 1 => return Err(Error::Dimension("sphere grids need dim >= 2".into())),
            2 => (0..count)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / count as f64;
                    DVector::from_vec(vec![a.cos(), a.sin()])
                })
                .collect(),
            3 => {
                let golden = PI * (3.0 - 5f64.sqrt());
                (0..count)
                    .map(|k| {
                        let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
                        let r = (1.0 - z * z).max(0.0).sqrt();
                        let a = golden * k as f64;
                        DVector::from_vec(vec![r * a.cos(), r * a.sin(), z])
                    })
                    .collect()
            }
            _ => {
                // Generalized golden ratio: the positive root of x^(dim+1) = x + 1.
                let mut phi = 2.0f64;
                for _ in 0..64 {
                    phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
                }
                let alpha: Vec<f64> = (1..=dim).map(|j| (1.0 / phi.powi(j as i32)).fract()).collect();
                let normal = Normal::new(0.0, 1.0).expect("standard normal");
                (0..count)
                    .map(|k| {
                        let v = DVector::from_fn(dim, |j, _| {
                            let u = (0.5 + alpha[j] * (k as f64 + 1.0)).fract();
                            normal.inverse_cdf(u.clamp(1e-12, 1.0 - 1e-12))
                        });
                        let nrm = v.norm();
                        v / nrm
                    })
                    .collect()
            }
        };
        Ok(FeatureGrid { directions, kind: GridKind::Fibonacci { count } })
    }

    pub fn directions(&self) -> &[DVector<f64>] {
        &self.directions
    }
    pub fn kind(&self) -> GridKind {
        self.kind
    }
    pub fn len(&self) -> usize {
        self.directions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
    /// Dimension of the directions (2 for the 1-D grid).
    pub fn dim(&self) -> usize {
        self.directions[0].len()
    }

    /// Input as seen by the directions: scalars are lifted to `(x, 1)` for the 1-D grid.
    fn lift(&self, x: &[f64]) -> Result<DVector<f64>> {
        match self.kind {
            GridKind::OneD { .. } => {
                if x.len() != 1 {
                    return Err(Error::Dimension(format!("1-D grid expects scalar inputs, got length {}", x.len())));
                }
                Ok(DVector::from_vec(vec![x[0], 1.0]))
            }
            _ => {
                if x.len() != self.dim() {
                    return Err(Error::Dimension(format!("expected length {}, got {}", self.dim(), x.len())));
                }
                Ok(DVector::from_column_slice(x))
            }
        }
    }
}

/// `[u^T x~]+` for every grid direction `u`.
pub fn lifted_features(grid: &FeatureGrid, x: &[f64]) -> Result<DVector<f64>> {
    let xt = grid.lift(x)?;
    Ok(DVector::from_iterator(grid.len(), grid.directions.iter().map(|u| u.dot(&xt).max(0.0))))
}

/// Lifts scalar inputs to `(x, 1)` so a bias-free two-layer net realizes `a relu(w x + b)`.
pub fn lift_1d(data: &Dataset) -> Result<Dataset> {
    if data.d() != 1 {
        return Err(Error::Dimension("lift_1d needs scalar inputs".into()));
    }
    let x = DMatrix::from_fn(2, data.n(), |r, c| if r == 0 { data.x(c)[0] } else { 1.0 });
    match data.kind() {
        LabelKind::Binary => Dataset::binary(&x, &data.targets()),
        LabelKind::Regression => Dataset::regression(&x, &data.targets()),
        LabelKind::Multiclass(_) => Err(Error::Domain("multiclass lift not supported".into())),
    }
}

/// A finitely supported signed measure on the sphere.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseLiftedFn {
    pub atoms: Vec<(DVector<f64>, f64)>,
}

impl SparseLiftedFn {
    pub fn one_norm(&self) -> f64 {
        self.atoms.iter().map(|(_, a)| a.abs()).sum()
    }

    /// `<alpha, phi(x)> = sum alpha_u [u^T x]+` for an already lifted `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.atoms
            .iter()
            .map(|(u, a)| a * u.iter().zip(x).map(|(p, q)| p * q).sum::<f64>().max(0.0))
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct L1Solution {
    pub gamma: f64,
    pub alpha: SparseLiftedFn,
    /// Grid indices of the atoms, aligned with `alpha.atoms`.
    pub support: Vec<usize>,
    /// True when no positive margin is achievable on this grid.
    pub inseparable: bool,
    pub pivots: usize,
}

/// Maximizes `gamma` subject to `y_i sum_k alpha_k phi_k(x_i) >= gamma` and `|alpha|_1 <= 1`,
/// with `alpha = alpha+ - alpha-`. The solution is a vertex, so at most `n` atoms are nonzero.
pub fn solve_l1_margin(data: &Dataset, grid: &FeatureGrid) -> Result<L1Solution> {
    if data.kind() != LabelKind::Binary {
        return Err(Error::Domain("l1 margin needs binary labels".into()));
    }
    if grid.is_empty() {
        return Err(Error::Degenerate("empty grid".into()));
    }
    let n = data.n();
    let k = grid.len();
    let y = data.targets();
    let mut feats = DMatrix::zeros(n, k);
    for i in 0..n {
        let f = lifted_features(grid, data.x(i).as_slice())?;
        for j in 0..k {
            feats[(i, j)] = y[i] * f[j];
        }
    }
    // Columns: alpha+ (k), alpha- (k), gamma.
    let nv = 2 * k + 1;
    let mut a = DMatrix::zeros(n + 1, nv);
    for i in 0..n {
        for j in 0..k {
            a[(i, j)] = -feats[(i, j)];
            a[(i, k + j)] = feats[(i, j)];
        }
        a[(i, 2 * k)] = 1.0;
    }
    for j in 0..2 * k {
        a[(n, j)] = 1.0;
    }
    let mut b = vec![0.0; n + 1];
    b[n] = 1.0;
    let mut c = vec![0.0; nv];
    c[2 * k] = 1.0;
    let cap = 200 * (n + 1 + nv);
    let sol = simplex::solve_max(&a, &b, &c, cap)?;
    let gamma = sol.x[2 * k];
    if gamma <= 1e-12 {
        return Ok(L1Solution { gamma: 0.0, alpha: SparseLiftedFn::default(), support: vec![], inseparable: true, pivots: sol.pivots });
    }
    let mut atoms = Vec::new();
    let mut support = Vec::new();
    for j in 0..k {
        let v = sol.x[j] - sol.x[k + j];
        if v != 0.0 {
            atoms.push((grid.directions[j].clone(), v));
            support.push(j);
        }
    }
    Ok(L1Solution { gamma, alpha: SparseLiftedFn { atoms }, support, inseparable: false, pivots: sol.pivots })
}

/// Two-layer net with unit `j` set to `(sign(a) sqrt(|a|/2), sqrt(|a|/2) u)` for atom `(u, a)`.
/// Its squared Frobenius norm is `|alpha|_1` and it computes `<alpha, phi(x)> / 2`.
pub fn sparse_to_net(alpha: &SparseLiftedFn, m: usize, dim: usize) -> Result<NetParams> {
    if m < alpha.atoms.len() {
        return Err(Error::WidthTooSmall { width: m, needed: alpha.atoms.len() });
    }
    let mut p = NetParams::zeros(dim, &[m], 1)?;
    for (j, (u, a)) in alpha.atoms.iter().enumerate() {
        if u.len() != dim {
            return Err(Error::Dimension(format!("atom {j} has dimension {}", u.len())));
        }
        let s = (a.abs() / 2.0).sqrt();
        let uj: Vec<f64> = u.iter().map(|v| s * v).collect();
        p.set_hidden_unit(j, a.signum() * s, &uj);
    }
    Ok(p)
}

/// Atoms `(u_j / |u_j|, 2 w_j |u_j|)` for every hidden unit with `u_j != 0`; computes
/// `2 f(x)` and has one-norm at most `|Theta|_F^2`.
pub fn net_to_sparse(params: &NetParams) -> Result<SparseLiftedFn> {
    if params.depth() != 2 || params.output_dim() != 1 {
        return Err(Error::Dimension("net_to_sparse needs a two-layer scalar network".into()));
    }
    let m = params.widths()[0];
    let mut atoms = Vec::new();
    for j in 0..m {
        let (w, u) = params.hidden_unit(j);
        let nu = u.norm();
        if nu > 0.0 {
            atoms.push((u / nu, 2.0 * w * nu));
        }
    }
    Ok(SparseLiftedFn { atoms })
}
