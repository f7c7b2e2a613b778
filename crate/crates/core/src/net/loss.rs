use nalgebra::DMatrix;

use super::{relu, NetParams, TrainConfig};
use crate::data::{Dataset, LabelKind};
use crate::error::{Error, Result};
use crate::stats::{sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `log(1 + exp(-y f))` for ±1 labels and a scalar output.
    Logistic,
    /// Softmax cross-entropy over `l` outputs.
    CrossEntropy(usize),
    /// `(y - f)^2`.
    Squared,
    /// `min((y - f)^2, 1)`.
    TruncatedSquared,
}

/// Pre-extracted training data: inputs as columns plus labels in the form each loss wants.
pub(crate) struct Batch {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub classes: Vec<usize>,
}

impl Batch {
    pub fn new(data: &Dataset, kind: LossKind) -> Result<Self> {
        let ok = matches!(
            (data.kind(), kind),
            (LabelKind::Binary, LossKind::Logistic)
                | (LabelKind::Binary, LossKind::CrossEntropy(2))
                | (LabelKind::Regression, LossKind::Squared)
                | (LabelKind::Regression, LossKind::TruncatedSquared)
        ) || matches!((data.kind(), kind), (LabelKind::Multiclass(a), LossKind::CrossEntropy(b)) if a == b);
        if !ok {
            return Err(Error::Domain(format!("loss {kind:?} does not fit labels {:?}", data.kind())));
        }
        Ok(Batch { x: data.design(), y: data.targets(), classes: data.classes() })
    }
}

/// Data term and its derivative with respect to the network outputs.
fn data_term(out: &DMatrix<f64>, batch: &Batch, kind: LossKind) -> (f64, DMatrix<f64>) {
    let n = out.ncols();
    let nf = n as f64;
    let mut d = DMatrix::zeros(out.nrows(), n);
    let mut total = 0.0;
    match kind {
        LossKind::Logistic => {
            for i in 0..n {
                let yf = batch.y[i] * out[(0, i)];
                total += softplus(-yf);
                d[(0, i)] = -batch.y[i] * sigmoid(-yf) / nf;
            }
        }
        LossKind::CrossEntropy(l) => {
            for i in 0..n {
                let col = out.column(i);
                let mx = col.max();
                let z: f64 = col.iter().map(|v| (v - mx).exp()).sum();
                let lse = mx + z.ln();
                let c = batch.classes[i];
                total += lse - col[c];
                for j in 0..l {
                    let p = (col[j] - lse).exp();
                    d[(j, i)] = (p - f64::from(u8::from(j == c))) / nf;
                }
            }
        }
        LossKind::Squared => {
            for i in 0..n {
                let r = out[(0, i)] - batch.y[i];
                total += r * r;
                d[(0, i)] = 2.0 * r / nf;
            }
        }
        LossKind::TruncatedSquared => {
            for i in 0..n {
                let r = out[(0, i)] - batch.y[i];
                if r * r < 1.0 {
                    total += r * r;
                    d[(0, i)] = 2.0 * r / nf;
                } else {
                    total += 1.0;
                }
            }
        }
    }
    (total / nf, d)
}

fn reg_value(norm_sq: f64, lambda: f64, r: f64) -> f64 {
    if lambda == 0.0 {
        0.0
    } else {
        lambda * norm_sq.powf(r / 2.0)
    }
}

/// Objective value and gradient on a prepared batch.
pub(crate) fn objective(
    params: &NetParams,
    batch: &Batch,
    kind: LossKind,
    lambda: f64,
    r: f64,
) -> Result<(f64, NetParams)> {
    let layers = params.layers();
    let q = layers.len();
    if q == 2 && layers[1].nrows() == 1 && !matches!(kind, LossKind::CrossEntropy(_)) {
        return objective_two_layer(params, batch, kind, lambda, r);
    }
    // acts[k] is the input to layer k (acts[0] = X).
    let mut acts: Vec<DMatrix<f64>> = Vec::with_capacity(q);
    acts.push(batch.x.clone());
    for w in &layers[..q - 1] {
        let mut z = w * acts.last().expect("non-empty");
        z.apply(|v| *v = relu(*v));
        acts.push(z);
    }
    let out = &layers[q - 1] * &acts[q - 1];
    let (data_loss, mut delta) = data_term(&out, batch, kind);
    if !data_loss.is_finite() {
        return Err(Error::NonFinite { layer: q });
    }
    let mut grads: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); q];
    for k in (0..q).rev() {
        grads[k] = &delta * acts[k].transpose();
        if k > 0 {
            let mut back = layers[k].transpose() * &delta;
            // relu'(z) = 1 for z > 0 and 0 otherwise; acts[k] > 0 exactly when z > 0.
            back.zip_apply(&acts[k], |b, a| {
                if a <= 0.0 {
                    *b = 0.0
                }
            });
            delta = back;
        }
    }
    let norm_sq = params.frobenius_norm_sq();
    let loss = data_loss + reg_value(norm_sq, lambda, r);
    if lambda != 0.0 && norm_sq > 0.0 {
        let c = lambda * r * norm_sq.powf(r / 2.0 - 1.0);
        for (g, w) in grads.iter_mut().zip(layers) {
            g.zip_apply(w, |a, b| *a += c * b);
        }
    }
    for (k, g) in grads.iter().enumerate() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { layer: k + 1 });
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite { layer: q });
    }
    Ok((loss, NetParams::new(grads)?))
}

/// Scalar-output two-layer case with explicit loops over examples; avoids the temporaries of
/// the general path, which dominate for small networks.
fn objective_two_layer(params: &NetParams, batch: &Batch, kind: LossKind, lambda: f64, r: f64) -> Result<(f64, NetParams)> {
    let u = &params.layers()[0];
    let w = &params.layers()[1];
    let (m, d) = u.shape();
    let n = batch.x.ncols();
    let nf = n as f64;
    let us = u.as_slice();
    let ws = w.as_slice();
    let xs = batch.x.as_slice();
    let mut gu = vec![0.0; m * d];
    let mut gw = vec![0.0; m];
    let mut z = vec![0.0; m];
    let mut total = 0.0;
    for i in 0..n {
        let x = &xs[i * d..(i + 1) * d];
        z.iter_mut().for_each(|v| *v = 0.0);
        for (k, xk) in x.iter().enumerate() {
            if *xk != 0.0 {
                let col = &us[k * m..(k + 1) * m];
                for (zj, ujk) in z.iter_mut().zip(col) {
                    *zj += ujk * xk;
                }
            }
        }
        let mut f = 0.0;
        for (zj, wj) in z.iter().zip(ws) {
            if *zj > 0.0 {
                f += wj * zj;
            }
        }
        let y = batch.y[i];
        let delta = match kind {
            LossKind::Logistic => {
                total += softplus(-y * f);
                -y * sigmoid(-y * f) / nf
            }
            LossKind::Squared => {
                total += (f - y) * (f - y);
                2.0 * (f - y) / nf
            }
            LossKind::TruncatedSquared => {
                let res = f - y;
                if res * res < 1.0 {
                    total += res * res;
                    2.0 * res / nf
                } else {
                    total += 1.0;
                    0.0
                }
            }
            LossKind::CrossEntropy(_) => unreachable!("cross-entropy uses the general path"),
        };
        if delta == 0.0 {
            continue;
        }
        for j in 0..m {
            if z[j] > 0.0 {
                gw[j] += delta * z[j];
                let g = delta * ws[j];
                for (k, xk) in x.iter().enumerate() {
                    gu[k * m + j] += g * xk;
                }
            }
        }
    }
    let data_loss = total / nf;
    if !data_loss.is_finite() {
        return Err(Error::NonFinite { layer: 2 });
    }
    let norm_sq = params.frobenius_norm_sq();
    let loss = data_loss + reg_value(norm_sq, lambda, r);
    if lambda != 0.0 && norm_sq > 0.0 {
        let c = lambda * r * norm_sq.powf(r / 2.0 - 1.0);
        for (g, v) in gu.iter_mut().zip(us) {
            *g += c * v;
        }
        for (g, v) in gw.iter_mut().zip(ws) {
            *g += c * v;
        }
    }
    if gu.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { layer: 1 });
    }
    if gw.iter().any(|v| !v.is_finite()) || !loss.is_finite() {
        return Err(Error::NonFinite { layer: 2 });
    }
    let grads = NetParams::new(vec![DMatrix::from_vec(m, d, gu), DMatrix::from_vec(1, m, gw)])?;
    Ok((loss, grads))
}

/// Loss (data term plus `lambda * |Theta|_F^r`) and its gradient, with relu'(0) = 0.
pub fn loss_and_grad(params: &NetParams, data: &Dataset, cfg: &TrainConfig) -> Result<(f64, NetParams)> {
    check_output(params, cfg.loss)?;
    let batch = Batch::new(data, cfg.loss)?;
    objective(params, &batch, cfg.loss, cfg.lambda, cfg.r)
}

/// Loss value only.
pub fn loss_value(params: &NetParams, data: &Dataset, cfg: &TrainConfig) -> Result<f64> {
    check_output(params, cfg.loss)?;
    let batch = Batch::new(data, cfg.loss)?;
    let out = params.forward_batch(&batch.x)?;
    let (v, _) = data_term(&out, &batch, cfg.loss);
    Ok(v + reg_value(params.frobenius_norm_sq(), cfg.lambda, cfg.r))
}

pub(crate) fn check_output(params: &NetParams, kind: LossKind) -> Result<()> {
    let want = match kind {
        LossKind::CrossEntropy(l) => l,
        _ => 1,
    };
    if params.output_dim() != want {
        return Err(Error::Dimension(format!(
            "loss {kind:?} needs {want} outputs, network has {}",
            params.output_dim()
        )));
    }
    Ok(())
}
