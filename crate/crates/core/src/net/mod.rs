//! Depth-q positive-homogeneous relu networks `W_q relu(... relu(W_1 x))`.

mod loss;
mod margin;
mod train;

pub use loss::{loss_and_grad, loss_value, LossKind};
pub use margin::{
    activation_drift, generalization_bound, lambda_schedule, normalized_margin, BoundInputs, MarginReport,
};
pub use train::{
    classification_error, margin_sweep, min_norm_regression_sweep, train, truncated_squared_error, RegressionReport,
    SweepConfig, TrainConfig, TrainOutcome,
};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{tags, Seed};

/// Weight-initialization schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Entries i.i.d. `N(0, scale^2 / fan_in)`.
    FanIn { scale: f64 },
    /// Entries i.i.d. `N(0, scale^2)`.
    Gaussian { scale: f64 },
}

impl Default for Init {
    fn default() -> Self {
        Init::FanIn { scale: 1.0 }
    }
}

/// Network weights; `layers[0]` is `W_1` (m1×d) and the last entry is the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    layers: Vec<DMatrix<f64>>,
}

pub(crate) fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

impl NetParams {
    pub fn new(layers: Vec<DMatrix<f64>>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::Dimension("a network needs at least two layers".into()));
        }
        for k in 1..layers.len() {
            if layers[k].ncols() != layers[k - 1].nrows() {
                return Err(Error::Dimension(format!(
                    "layer {} has {} columns but layer {} has {} rows",
                    k + 1,
                    layers[k].ncols(),
                    k,
                    layers[k - 1].nrows()
                )));
            }
        }
        for (k, w) in layers.iter().enumerate() {
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: k + 1 });
            }
        }
        Ok(NetParams { layers })
    }

    /// All-zero network with hidden sizes `widths` and `out` outputs.
    pub fn zeros(d: usize, widths: &[usize], out: usize) -> Result<Self> {
        let mut dims = vec![d];
        dims.extend_from_slice(widths);
        dims.push(out);
        let layers = dims.windows(2).map(|p| DMatrix::zeros(p[1], p[0])).collect();
        NetParams::new(layers)
    }

    /// Random network; entry streams are keyed by `(seed, layer)`.
    pub fn init(d: usize, widths: &[usize], out: usize, init: Init, seed: Seed) -> Result<Self> {
        let mut p = NetParams::zeros(d, widths, out)?;
        for (k, w) in p.layers.iter_mut().enumerate() {
            let fan_in = w.ncols() as f64;
            let std = match init {
                Init::FanIn { scale } => scale / fan_in.sqrt(),
                Init::Gaussian { scale } => scale,
            };
            let mut rng = seed.rng_at(tags::NET_INIT, k as u64);
            // Column-major fill; the order is fixed so results are reproducible.
            for v in w.iter_mut() {
                *v = std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(p)
    }

    /// Two-layer net from output weights `w` (length m) and hidden rows `u` (m×d).
    pub fn two_layer(w: &[f64], u: DMatrix<f64>) -> Result<Self> {
        if w.len() != u.nrows() {
            return Err(Error::Dimension("w and u disagree on width".into()));
        }
        NetParams::new(vec![u, DMatrix::from_row_slice(1, w.len(), w)])
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
    pub fn input_dim(&self) -> usize {
        self.layers[0].ncols()
    }
    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|w| w.nrows()).unwrap_or(0)
    }
    pub fn widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|w| w.nrows()).collect()
    }
    pub fn layers(&self) -> &[DMatrix<f64>] {
        &self.layers
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.layers.iter().map(|w| w.norm_squared()).sum()
    }
    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn scaled(&self, c: f64) -> NetParams {
        NetParams { layers: self.layers.iter().map(|w| w * c).collect() }
    }

    /// Output vector for a single input.
    pub fn forward(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!("expected input of length {}, got {}", self.input_dim(), x.len())));
        }
        let mut h = DVector::from_column_slice(x);
        let last = self.layers.len() - 1;
        for (k, w) in self.layers.iter().enumerate() {
            h = w * h;
            if k < last {
                h.apply(|v| *v = relu(*v));
            }
        }
        Ok(h)
    }

    /// First output coordinate; callers guarantee the dimension.
    pub fn score(&self, x: &DVector<f64>) -> f64 {
        self.forward(x.as_slice()).map(|o| o[0]).unwrap_or(f64::NAN)
    }

    /// Outputs for a d×n batch, one column per example.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.input_dim() {
            return Err(Error::Dimension(format!("expected {} rows, got {}", self.input_dim(), x.nrows())));
        }
        let last = self.layers.len() - 1;
        let mut h = &self.layers[0] * x;
        for k in 1..=last {
            h.apply(|v| *v = relu(*v));
            h = &self.layers[k] * h;
        }
        Ok(h)
    }

    /// Hidden unit `j` of a two-layer scalar-output net as `(w_j, u_j)`.
    pub fn hidden_unit(&self, j: usize) -> (f64, DVector<f64>) {
        let u = self.layers[0].row(j).transpose();
        (self.layers[1][(0, j)], u)
    }

    /// Overwrites hidden unit `j` of a two-layer net.
    pub fn set_hidden_unit(&mut self, j: usize, w: f64, u: &[f64]) {
        self.layers[1][(0, j)] = w;
        for (k, v) in u.iter().enumerate() {
            self.layers[0][(j, k)] = *v;
        }
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        for (k, w) in self.layers.iter().enumerate() {
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: k + 1 });
            }
        }
        Ok(())
    }

    /// `self += c * other` (same shapes).
    pub(crate) fn axpy(&mut self, c: f64, other: &NetParams) {
        for (w, g) in self.layers.iter_mut().zip(&other.layers) {
            w.zip_apply(g, |a, b| *a += c * b);
        }
    }
}

/// The four-unit net `[x1]+ + [-x1]+ - [x2]+ - [-x2]+`, which labels every point of D
/// correctly with unnormalized margin 1.
pub fn handcrafted_d_net(d: usize) -> Result<NetParams> {
    if d < 2 {
        return Err(Error::Dimension("need d >= 2".into()));
    }
    let mut u = DMatrix::zeros(4, d);
    u[(0, 0)] = 1.0;
    u[(1, 0)] = -1.0;
    u[(2, 1)] = 1.0;
    u[(3, 1)] = -1.0;
    NetParams::two_layer(&[1.0, 1.0, -1.0, -1.0], u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_are_checked() {
        let bad = vec![DMatrix::<f64>::zeros(3, 2), DMatrix::zeros(1, 4)];
        assert!(matches!(NetParams::new(bad), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_net_outputs_zero() {
        let p = NetParams::zeros(3, &[5, 4], 1).unwrap();
        assert_eq!(p.forward(&[1.0, -2.0, 3.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn handcrafted_net_recovers_labels() {
        let p = handcrafted_d_net(5).unwrap();
        assert_eq!(p.frobenius_norm_sq(), 8.0);
        let x = [0.0, -1.0, 1.0, 1.0, -1.0];
        assert_eq!(p.forward(&x).unwrap()[0], -1.0);
        let x = [1.0, 0.0, -1.0, 1.0, -1.0];
        assert_eq!(p.forward(&x).unwrap()[0], 1.0);
    }

    #[test]
    fn batch_matches_single() {
        let p = NetParams::init(3, &[6, 5], 2, Init::default(), Seed(1)).unwrap();
        let x = DMatrix::from_fn(3, 4, |r, c| (r as f64 - 1.0) * (c as f64 + 0.5));
        let b = p.forward_batch(&x).unwrap();
        for c in 0..4 {
            let s = p.forward(x.column(c).as_slice()).unwrap();
            assert!((s - b.column(c)).norm() < 1e-12);
        }
    }
}
