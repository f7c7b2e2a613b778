use super::NetParams;
use crate::data::{Dataset, LabelKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginReport {
    /// Regularization strength that produced the parameters, when known.
    pub lambda: Option<f64>,
    pub train_loss: Option<f64>,
    pub frob_norm: f64,
    /// `unnormalized_margin / frob_norm^q`.
    pub normalized_margin: f64,
    pub unnormalized_margin: f64,
    pub zero_train_error: bool,
}

/// Margin of `Theta / |Theta|_F`, computed through homogeneity as `min_i y_i f(x_i) / |Theta|^q`.
/// Multiclass data uses `f_{y_i} - max_{j != y_i} f_j`.
pub fn normalized_margin(params: &NetParams, data: &Dataset) -> Result<MarginReport> {
    let norm = params.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::Degenerate("normalized margin of a zero network".into()));
    }
    let out = params.forward_batch(&data.design())?;
    let margin = match data.kind() {
        LabelKind::Binary => {
            if out.nrows() != 1 {
                return Err(Error::Dimension("binary margin needs a scalar output".into()));
            }
            let y = data.targets();
            (0..data.n()).map(|i| y[i] * out[(0, i)]).fold(f64::INFINITY, f64::min)
        }
        LabelKind::Multiclass(l) => {
            if out.nrows() != l {
                return Err(Error::Dimension(format!("expected {l} outputs, got {}", out.nrows())));
            }
            let cls = data.classes();
            (0..data.n())
                .map(|i| {
                    let c = cls[i];
                    let other = (0..l).filter(|&j| j != c).map(|j| out[(j, i)]).fold(f64::NEG_INFINITY, f64::max);
                    out[(c, i)] - other
                })
                .fold(f64::INFINITY, f64::min)
        }
        LabelKind::Regression => return Err(Error::Domain("margin needs classification labels".into())),
    };
    let q = params.depth() as i32;
    Ok(MarginReport {
        lambda: None,
        train_loss: None,
        frob_norm: norm,
        normalized_margin: margin / norm.powi(q),
        unnormalized_margin: margin,
        zero_train_error: margin > 0.0,
    })
}

/// Regularization strength that makes an approximate minimizer retain a constant fraction of
/// the optimal margin: `exp(-(2^(r/a) - 1)^(-a/r)) * gamma^(r/a) / (n^c (l-1)^c)`.
pub fn lambda_schedule(gamma_star: f64, n: usize, l: usize, r: f64, a: f64, c: f64) -> Result<f64> {
    if !(gamma_star > 0.0 && r > 0.0 && a > 0.0 && c > 0.0) || n == 0 || l < 2 {
        return Err(Error::Domain("lambda schedule needs positive arguments and l >= 2".into()));
    }
    let ra = r / a;
    let lead = (-(2f64.powf(ra) - 1.0).powf(-1.0 / ra)).exp();
    Ok(lead * gamma_star.powf(ra) / ((n as f64).powf(c) * ((l - 1) as f64).powf(c)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Largest input norm.
    pub c: f64,
    pub gamma: f64,
    pub q: usize,
    pub n: usize,
    pub delta: f64,
}

/// Margin-based test-error bound with the universal constant set to 1:
/// `C / (gamma q^((q-1)/2) sqrt(n)) + sqrt(log max(log2(4C/gamma), 2) / n) + sqrt(log(1/delta) / n)`.
pub fn generalization_bound(b: BoundInputs) -> Result<f64> {
    if !(b.c > 0.0 && b.gamma > 0.0 && b.delta > 0.0 && b.delta < 1.0) || b.q == 0 || b.n == 0 {
        return Err(Error::Domain("bound inputs must be positive with delta in (0,1)".into()));
    }
    let n = b.n as f64;
    let q = b.q as f64;
    let main = b.c / (b.gamma * q.powf((q - 1.0) / 2.0) * n.sqrt());
    let inner = (4.0 * b.c / b.gamma).log2().max(2.0);
    Ok(main + (inner.ln() / n).sqrt() + ((1.0 / b.delta).ln() / n).sqrt())
}

/// Fraction of (hidden unit, example) pairs whose indicator `u_j^T x_i >= 0` differs between two
/// two-layer networks of equal width.
pub fn activation_drift(a: &NetParams, b: &NetParams, data: &Dataset) -> Result<f64> {
    if a.depth() != 2 || b.depth() != 2 {
        return Err(Error::Dimension("activation drift needs two-layer nets".into()));
    }
    if a.layers()[0].shape() != b.layers()[0].shape() {
        return Err(Error::Dimension("networks have different widths".into()));
    }
    let x = data.design();
    let za = &a.layers()[0] * &x;
    let zb = &b.layers()[0] * &x;
    let flips = za.iter().zip(zb.iter()).filter(|(p, q)| (**p >= 0.0) != (**q >= 0.0)).count();
    Ok(flips as f64 / za.len() as f64)
}
