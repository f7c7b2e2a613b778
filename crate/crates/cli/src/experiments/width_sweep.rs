//! Trained margin and test error as the hidden layer widens.

use anyhow::{Context, Result};
use marginlab::data::{sample_teacher_net, sample_teacher_net_from, TeacherMode};
use marginlab::net::{classification_error, normalized_margin, train, Init, LossKind, NetParams, TrainConfig};
use marginlab::rng::tags;
use marginlab::Seed;

use super::{mean, per_seed, stderr, Artifact, Report, Surface};
use crate::config::{key, Config, Key, Kind, Preset};
use crate::svg::PlotSpec;
use crate::table::{num, Table};

static SCHEMA: [Key; 14] = [
    key("seed", "0", Kind::Int, "first seed"),
    key("seeds", "5", Kind::Int, "trials per width"),
    key("width.widths", "16,32,64,128,256,512,1024", Kind::IntList, "hidden layer sizes"),
    key("width.n", "50", Kind::Int, "training set size"),
    key("width.d", "20", Kind::Int, "input dimension"),
    key("width.test_n", "2000", Kind::Int, "test set size"),
    key("width.teacher_width", "10", Kind::Int, "hidden units of the teacher net"),
    key("width.teacher_margin", "0.01", Kind::Float, "rejection floor on |teacher(x)|"),
    key("net.init", "fanin", Kind::Choice(&["fanin", "gaussian"]), "initialization family"),
    key("net.init_scale", "0.1", Kind::PositiveFloat, "initialization scale"),
    key("net.lr", "0.5", Kind::PositiveFloat, "learning rate"),
    key("net.lambda", "0.001", Kind::Float, "weight decay"),
    key("net.steps", "5000", Kind::Int, "gradient steps"),
    key("net.r", "2", Kind::PositiveFloat, "norm exponent of the penalty"),
];

static PRESETS: [Preset; 1] = [Preset {
    name: "gG1",
    values: &[
        ("seeds", "20"),
        ("width.n", "100"),
        ("net.lr", "0.1"),
        ("net.lambda", "0.00001"),
        ("net.steps", "80000"),
    ],
}];

pub static SURFACE: Surface = Surface { schema: &SCHEMA, presets: &PRESETS };

#[derive(Debug, Clone, PartialEq)]
pub struct WidthRow {
    pub width: usize,
    /// Mean over trials that reached zero training error.
    pub margin: f64,
    pub margin_stderr: f64,
    pub test_err: f64,
    pub test_err_stderr: f64,
    pub fit_fraction: f64,
    pub fits: usize,
}

#[derive(Debug, Clone)]
pub struct WidthResult {
    pub rows: Vec<WidthRow>,
}

/// `(width, margin, test error, fitted)` for one trial.
type Trial = (usize, f64, f64, bool);

pub fn run(cfg: &Config) -> Result<(Report, WidthResult)> {
    let widths = cfg.usize_list("width.widths");
    let d = cfg.usize("width.d");
    let n = cfg.usize("width.n");
    let init = match cfg.raw("net.init") {
        "gaussian" => Init::Gaussian { scale: cfg.f64("net.init_scale") },
        _ => Init::FanIn { scale: cfg.f64("net.init_scale") },
    };
    let tc = TrainConfig {
        lambda: cfg.f64("net.lambda"),
        r: cfg.f64("net.r"),
        lr: cfg.f64("net.lr"),
        steps: cfg.usize("net.steps"),
        loss: LossKind::Logistic,
    };
    let trials = per_seed(cfg, |s| -> Result<Vec<Trial>> {
        let seed = Seed(s);
        let teacher = NetParams::init(d, &[cfg.usize("width.teacher_width")], 1, Init::Gaussian { scale: 1.0 }, seed.derive(tags::TEACHER))?;
        let mode = TeacherMode::Classification { margin_floor: cfg.f64("width.teacher_margin") };
        let train_set = sample_teacher_net(n, d, &teacher, mode, seed).with_context(|| format!("sampling data (seed={s})"))?;
        let test = sample_teacher_net_from(cfg.usize("width.test_n"), d, &teacher, TeacherMode::Classification { margin_floor: 0.0 }, seed, 1 << 32)?;
        let mut out = Vec::new();
        for &m in &widths {
            let p0 = NetParams::init(d, &[m], 1, init, seed.derive(tags::NET_INIT))?;
            let o = train(&p0, &train_set, &tc).with_context(|| format!("training width {m} (seed={s})"))?;
            let (margin, fitted) = match normalized_margin(&o.params, &train_set) {
                Ok(r) => (r.normalized_margin, r.zero_train_error),
                // A network that collapsed to zero has no margin and does not fit.
                Err(marginlab::Error::Degenerate(_)) => (0.0, false),
                Err(e) => return Err(e.into()),
            };
            out.push((m, margin, classification_error(&o.params, &test)?, fitted));
        }
        Ok(out)
    })?;

    let mut raw = Table::new(&["width", "seed", "margin", "test_err", "fit"]);
    for (s, rows) in &trials {
        for &(m, g, e, f) in rows {
            raw.push(vec![m.to_string(), s.to_string(), num(g), num(e), (f as u8).to_string()]);
        }
    }
    let mut rows = Vec::new();
    for &m in &widths {
        let fitted: Vec<&Trial> = trials.iter().flat_map(|(_, r)| r.iter()).filter(|t| t.0 == m && t.3).collect();
        let total = trials.len();
        let g: Vec<f64> = fitted.iter().map(|t| t.1).collect();
        let e: Vec<f64> = fitted.iter().map(|t| t.2).collect();
        rows.push(WidthRow {
            width: m,
            margin: mean(&g),
            margin_stderr: stderr(&g),
            test_err: mean(&e),
            test_err_stderr: stderr(&e),
            fit_fraction: if total == 0 { 0.0 } else { fitted.len() as f64 / total as f64 },
            fits: fitted.len(),
        });
    }
    let mut agg = Table::new(&["width", "margin", "test_err", "fit_fraction", "margin_stderr", "test_err_stderr", "fits"]);
    for r in &rows {
        agg.push(vec![
            r.width.to_string(),
            num(r.margin),
            num(r.test_err),
            num(r.fit_fraction),
            num(r.margin_stderr),
            num(r.test_err_stderr),
            r.fits.to_string(),
        ]);
    }
    let summary = rows
        .iter()
        .map(|r| format!("width {}: margin {:.5}, test error {:.4}, fitted {}/{}", r.width, r.margin, r.test_err, r.fits, trials.len()))
        .collect();
    let report = Report {
        artifacts: vec![
            Artifact::new("width_sweep", agg.clone(), Some(PlotSpec::new("normalized margin vs width", "width", &["margin"]).err("margin_stderr").log_x())),
            Artifact::new("width_sweep_test_err", agg, Some(PlotSpec::new("test error vs width", "width", &["test_err"]).err("test_err_stderr").log_x())),
            Artifact::new("width_sweep_seeds", raw, None),
        ],
        summary,
    };
    Ok((report, WidthResult { rows }))
}
