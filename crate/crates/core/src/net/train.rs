use super::loss::{check_output, objective, Batch};
use super::{normalized_margin, LossKind, MarginReport, NetParams};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    /// Exponent of the norm penalty `lambda * |Theta|_F^r`.
    pub r: f64,
    pub lr: f64,
    pub steps: usize,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lambda: 1e-5, r: 2.0, lr: 0.1, steps: 1000, loss: LossKind::Logistic }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.lambda >= 0.0) || !(self.r > 0.0) {
            return Err(Error::Config("need lambda >= 0 and r > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetParams,
    /// Objective at every iterate, `steps + 1` entries starting from the initial point.
    pub loss_trace: Vec<f64>,
    /// Number of steps where the objective went up.
    pub upticks: usize,
}

/// Full-batch gradient descent with a fixed learning rate.
pub fn train(params0: &NetParams, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_output(params0, cfg.loss)?;
    let batch = Batch::new(data, cfg.loss)?;
    train_on(params0.clone(), &batch, cfg)
}

fn train_on(mut params: NetParams, batch: &Batch, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    let mut upticks = 0;
    for step in 0..=cfg.steps {
        let (loss, grad) = match objective(&params, batch, cfg.loss, cfg.lambda, cfg.r) {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => return Err(Error::Divergence { step, loss: f64::NAN }),
            Err(e) => return Err(e),
        };
        if let Some(prev) = trace.last() {
            if loss > *prev {
                upticks += 1;
            }
        }
        trace.push(loss);
        if step == cfg.steps {
            break;
        }
        params.axpy(-cfg.lr, &grad);
        if params.check_finite().is_err() {
            return Err(Error::Divergence { step: step + 1, loss: f64::NAN });
        }
    }
    Ok(TrainOutcome { params, loss_trace: trace, upticks })
}

/// Settings for a decreasing-lambda sweep with warm starts.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Strictly decreasing, all positive.
    pub lambdas: Vec<f64>,
    pub steps: usize,
    pub lr: f64,
    pub r: f64,
    pub loss: LossKind,
    /// Multiply the parameters by `(lambda_prev / lambda_next)^(1/(r+1))` before each warm start.
    pub rescale: bool,
}

fn check_lambdas(l: &[f64]) -> Result<()> {
    if l.is_empty() {
        return Err(Error::Config("lambda list is empty".into()));
    }
    if l.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Config("every lambda must be positive".into()));
    }
    if l.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("lambdas must be strictly decreasing".into()));
    }
    Ok(())
}

/// Trains one network per lambda, each warm-started from the previous solution, and reports
/// the normalized margin after each stage. Returns the reports and the final parameters.
pub fn margin_sweep(
    params0: &NetParams,
    data: &Dataset,
    sweep: &SweepConfig,
) -> Result<(Vec<MarginReport>, NetParams)> {
    check_lambdas(&sweep.lambdas)?;
    check_output(params0, sweep.loss)?;
    let batch = Batch::new(data, sweep.loss)?;
    let mut params = params0.clone();
    let mut reports = Vec::with_capacity(sweep.lambdas.len());
    for (k, &lambda) in sweep.lambdas.iter().enumerate() {
        if k > 0 && sweep.rescale {
            let f = (sweep.lambdas[k - 1] / lambda).powf(1.0 / (sweep.r + 1.0));
            params = params.scaled(f);
        }
        let cfg = TrainConfig { lambda, r: sweep.r, lr: sweep.lr, steps: sweep.steps, loss: sweep.loss };
        cfg.validate()?;
        let out = train_on(params, &batch, &cfg)?;
        params = out.params;
        let mut rep = normalized_margin(&params, data)?;
        rep.lambda = Some(lambda);
        rep.train_loss = out.loss_trace.last().copied();
        reports.push(rep);
    }
    Ok((reports, params))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionReport {
    pub lambda: f64,
    pub train_mse: f64,
    pub norm_sq: f64,
    /// Mean `min((y - f)^2, 1)` on the held-out set, when one is given.
    pub test_truncated: Option<f64>,
}

/// Decreasing-lambda sweep on the squared loss. The flag is `false` when the smallest lambda
/// does not reach `mse_tol`.
pub fn min_norm_regression_sweep(
    params0: &NetParams,
    data: &Dataset,
    lambdas: &[f64],
    steps: usize,
    lr: f64,
    test: Option<&Dataset>,
    mse_tol: f64,
) -> Result<(Vec<RegressionReport>, bool)> {
    check_lambdas(lambdas)?;
    let batch = Batch::new(data, LossKind::Squared)?;
    let mut params = params0.clone();
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let cfg = TrainConfig { lambda, r: 2.0, lr, steps, loss: LossKind::Squared };
        cfg.validate()?;
        params = train_on(params, &batch, &cfg)?.params;
        let pred = params.forward_batch(&batch.x)?;
        let n = batch.y.len() as f64;
        let mse = pred.iter().zip(&batch.y).map(|(f, y)| (f - y) * (f - y)).sum::<f64>() / n;
        let test_truncated = match test {
            Some(t) => Some(truncated_squared_error(&params, t)?),
            None => None,
        };
        out.push(RegressionReport { lambda, train_mse: mse, norm_sq: params.frobenius_norm_sq(), test_truncated });
    }
    let ok = out.last().map(|r| r.train_mse <= mse_tol).unwrap_or(false);
    Ok((out, ok))
}

/// Mean `min((y - f)^2, 1)` over a regression dataset.
pub fn truncated_squared_error(params: &NetParams, data: &Dataset) -> Result<f64> {
    let pred = params.forward_batch(&data.design())?;
    let y = data.targets();
    Ok(pred.iter().zip(&y).map(|(f, y)| ((f - y) * (f - y)).min(1.0)).sum::<f64>() / y.len() as f64)
}

/// Fraction of ±1 examples where `y f(x) <= 0`.
pub fn classification_error(params: &NetParams, data: &Dataset) -> Result<f64> {
    let pred = params.forward_batch(&data.design())?;
    let y = data.targets();
    let wrong = pred.row(0).iter().zip(&y).filter(|(f, y)| **f * **y <= 0.0).count();
    Ok(wrong as f64 / y.len() as f64)
}
