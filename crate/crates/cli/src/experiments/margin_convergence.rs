//! Normalized margin of a weakly regularized net against the l1-SVM optimum on 1-D data.
//!
//! Inputs are lifted to `(x, 1)` so the bias-free net can place kinks anywhere. For a
//! two-layer net at `|Theta|_F = 1` the best achievable margin is half the l1-SVM margin.

use anyhow::{bail, Context, Result};
use marginlab::data::Dataset;
use marginlab::l1svm::{lift_1d, solve_l1_margin, FeatureGrid};
use marginlab::net::{margin_sweep, Init, LossKind, NetParams, SweepConfig};
use marginlab::rng::tags;
use marginlab::Seed;
use nalgebra::DMatrix;
use rand::Rng;

use super::{Artifact, Report, Surface};
use crate::config::{key, Config, Key, Kind};
use crate::svg::PlotSpec;
use crate::table::{num, Table};

/// Stream tag for the 1-D inputs.
const ONE_D_TAG: u64 = 99;

static SCHEMA: [Key; 12] = [
    key("seed", "7", Kind::Int, "seed for data and initialization"),
    key("seeds", "1", Kind::Int, "unused; the experiment is a single run"),
    key("mc.n", "20", Kind::Int, "number of 1-D points"),
    key("mc.threshold", "0.4", Kind::PositiveFloat, "label is +1 when |x| exceeds this"),
    key("mc.grid", "1000", Kind::Int, "directions in the l1-SVM grid"),
    key(
        "mc.lambdas",
        "0.0625,0.03125,0.015625,0.0078125,0.00390625,0.001953125,0.0009765625,0.00048828125,0.000244140625,0.0001220703125,0.00006103515625",
        Kind::FloatList,
        "strictly decreasing lambdas, 2^-4 to 2^-14 by default",
    ),
    key("mc.plot_points", "201", Kind::Int, "x grid size for the function curves"),
    key("net.width", "100", Kind::Int, "hidden units"),
    key("net.init_scale", "1", Kind::PositiveFloat, "fan-in init scale"),
    key("net.lr", "0.5", Kind::PositiveFloat, "learning rate"),
    key("net.steps", "10000", Kind::Int, "gradient steps per lambda"),
    key("net.rescale", "true", Kind::Bool, "rescale parameters between lambdas"),
];

pub static SURFACE: Surface = Surface { schema: &SCHEMA, presets: &[] };

#[derive(Debug, Clone)]
pub struct MarginConvergence {
    pub gamma_l1: f64,
    /// `(lambda, normalized margin)` in sweep order.
    pub margins: Vec<(f64, f64)>,
    /// Largest pointwise gap between the normalized net and SVM functions on the plot grid.
    pub max_function_gap: f64,
}

impl MarginConvergence {
    pub fn target(&self) -> f64 {
        self.gamma_l1 / 2.0
    }
    pub fn final_ratio(&self) -> f64 {
        self.margins.last().map_or(f64::NAN, |m| m.1 / self.target())
    }
}

pub fn one_d_data(n: usize, threshold: f64, seed: Seed) -> Result<Dataset> {
    let mut rng = seed.rng(ONE_D_TAG);
    let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ys: Vec<f64> = xs.iter().map(|x| if x.abs() > threshold { 1.0 } else { -1.0 }).collect();
    Ok(Dataset::binary(&DMatrix::from_row_slice(1, n, &xs), &ys)?)
}

pub fn run(cfg: &Config) -> Result<(Report, MarginConvergence)> {
    let lambdas = cfg.f64_list("mc.lambdas");
    let seed = Seed(cfg.u64("seed"));
    let data = one_d_data(cfg.usize("mc.n"), cfg.f64("mc.threshold"), seed).context("sampling 1-D data")?;
    let grid = FeatureGrid::one_d(cfg.usize("mc.grid"))?;
    let sol = solve_l1_margin(&data, &grid).context("solving the l1-SVM")?;
    if sol.inseparable {
        bail!("l1-SVM stage: data is not separable on the grid");
    }
    let lifted = lift_1d(&data)?;
    let p0 = NetParams::init(2, &[cfg.usize("net.width")], 1, Init::FanIn { scale: cfg.f64("net.init_scale") }, seed.derive(tags::NET_INIT))?;
    let sweep = SweepConfig {
        lambdas,
        steps: cfg.usize("net.steps"),
        lr: cfg.f64("net.lr"),
        r: 2.0,
        loss: LossKind::Logistic,
        rescale: cfg.bool("net.rescale"),
    };
    let (reports, params) = margin_sweep(&p0, &lifted, &sweep).context("margin sweep")?;
    let target = sol.gamma / 2.0;

    let mut mt = Table::new(&["lambda", "normalized_margin", "ratio", "train_loss", "frob_norm"]);
    let mut margins = Vec::new();
    for r in &reports {
        let l = r.lambda.unwrap_or(f64::NAN);
        margins.push((l, r.normalized_margin));
        mt.push(vec![num(l), num(r.normalized_margin), num(r.normalized_margin / target), num(r.train_loss.unwrap_or(f64::NAN)), num(r.frob_norm)]);
    }

    // Net at unit norm against the SVM function scaled to the matching norm, |alpha|_1 = 1/2.
    let norm_sq = params.frobenius_norm_sq();
    let svm_scale = 0.5 / sol.alpha.one_norm();
    let k = cfg.usize("mc.plot_points").max(2);
    let mut ft = Table::new(&["x", "net", "svm"]);
    let mut gap: f64 = 0.0;
    for i in 0..k {
        let x = -1.0 + 2.0 * i as f64 / (k - 1) as f64;
        let net = params.forward(&[x, 1.0])?[0] / norm_sq;
        let svm = sol.alpha.eval(&[x, 1.0]) * svm_scale;
        gap = gap.max((net - svm).abs());
        ft.push(vec![num(x), num(net), num(svm)]);
    }
    let mut points = Table::new(&["x", "y"]);
    for (e, y) in data.examples().iter().zip(data.targets()) {
        points.push(vec![num(e.x[0]), num(y)]);
    }

    let result = MarginConvergence { gamma_l1: sol.gamma, margins, max_function_gap: gap };
    let summary = vec![
        format!("l1-SVM margin {:.6} on {} directions, {} atoms; target {:.6}", sol.gamma, grid.len(), sol.alpha.atoms.len(), target),
        format!("final normalized margin {:.6}, ratio {:.4}", result.margins.last().map_or(f64::NAN, |m| m.1), result.final_ratio()),
        format!("max pointwise gap between normalized functions {gap:.5}"),
    ];
    let report = Report {
        artifacts: vec![
            Artifact::new("margin_convergence", mt, Some(PlotSpec::new("normalized margin vs lambda", "lambda", &["normalized_margin"]).log_x())),
            Artifact::new("margin_functions", ft, Some(PlotSpec::new("normalized functions", "x", &["net", "svm"]))),
            Artifact::new("margin_data", points, None),
        ],
        summary,
    };
    Ok((report, result))
}
