//! Kernel method versus weakly regularized two-layer net as the training set grows.

use anyhow::{Context, Result};
use marginlab::data::{sample_distribution_d, sample_distribution_d_from, sample_teacher_net, sample_teacher_net_from, Dataset, TeacherMode};
use marginlab::net::{classification_error, train, truncated_squared_error, Init, LossKind, NetParams, TrainConfig};
use marginlab::ntk::{fit_kernel_logistic, fit_kernel_ridge, kernel_test_error, kernel_truncated_squared_loss, KernelLogisticConfig, NtkConfig};
use marginlab::rng::tags;
use marginlab::Seed;

use super::{mean, per_seed, stderr, Artifact, Report, Surface};
use crate::config::{key, Config, Key, Kind, Preset};
use crate::svg::PlotSpec;
use crate::table::{num, Table};

static SCHEMA: [Key; 24] = [
    key("seed", "0", Kind::Int, "first seed"),
    key("seeds", "20", Kind::Int, "number of seeds"),
    key("gap.mode", "classification", Kind::Choice(&["classification", "regression"]), "task"),
    key("gap.data", "D", Kind::Choice(&["D", "teacher"]), "classification data: distribution D or a random teacher net"),
    key("gap.d", "20", Kind::Int, "input dimension"),
    key("gap.ns", "50,100,200,400", Kind::IntList, "training set sizes"),
    key("gap.test_n", "2000", Kind::Int, "test set size"),
    key("gap.teacher_width", "6", Kind::Int, "hidden units of the teacher net"),
    key("gap.teacher_margin", "0.1", Kind::Float, "rejection floor on |teacher(x)| for classification"),
    key("net.width", "64", Kind::Int, "hidden units; 0 means one per training example"),
    key("net.init_scale", "0.1", Kind::PositiveFloat, "fan-in init scale"),
    key("net.lr", "0.5", Kind::PositiveFloat, "learning rate"),
    key("net.lambda", "0.00001", Kind::Float, "weight decay"),
    key("net.steps", "3000", Kind::Int, "gradient steps"),
    key("reg.width", "0", Kind::Int, "regression hidden units; 0 means one per training example"),
    key("reg.init_scale", "0.5", Kind::PositiveFloat, "regression fan-in init scale"),
    key("reg.lr", "0.02", Kind::PositiveFloat, "regression learning rate"),
    key("reg.lambda", "0.000001", Kind::Float, "regression weight decay"),
    key("reg.steps", "3000", Kind::Int, "regression gradient steps"),
    key("kernel.tau1", "1", Kind::Float, "weight of K1"),
    key("kernel.tau2", "1", Kind::Float, "weight of K1 + K2"),
    key("kernel.reg", "0.000001", Kind::Float, "kernel logistic RKHS penalty"),
    key("kernel.steps", "20000", Kind::Int, "kernel logistic gradient steps"),
    key("kernel.ridge", "0.000001", Kind::PositiveFloat, "kernel ridge penalty"),
];

static PRESETS: [Preset; 1] = [Preset {
    name: "gG2",
    values: &[
        ("seeds", "100"),
        ("gap.data", "teacher"),
        ("net.width", "0"),
        ("net.lambda", "0.00000001"),
        ("net.steps", "20000"),
        ("net.lr", "0.1"),
        ("reg.steps", "20000"),
        ("reg.lambda", "0.00000001"),
        ("kernel.tau1", "0"),
        ("kernel.tau2", "1"),
    ],
}];

pub static SURFACE: Surface = Surface { schema: &SCHEMA, presets: &PRESETS };

#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub n: usize,
    pub method: &'static str,
    pub mean: f64,
    pub stderr: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone)]
pub struct GapResult {
    pub rows: Vec<GapRow>,
    /// `(n, method, seed, test error)`.
    pub per_seed: Vec<(usize, &'static str, u64, f64)>,
}

impl GapResult {
    pub fn mean(&self, n: usize, method: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.n == n && r.method == method).map(|r| r.mean)
    }
}

struct Split {
    train: Dataset,
    test: Dataset,
}

const TEST_OFFSET: u64 = 1 << 32;

fn split(cfg: &Config, n: usize, seed: Seed) -> Result<Split> {
    let d = cfg.usize("gap.d");
    let test_n = cfg.usize("gap.test_n");
    let regression = cfg.raw("gap.mode") == "regression";
    if !regression && cfg.raw("gap.data") == "D" {
        return Ok(Split {
            train: sample_distribution_d(n, d, seed)?,
            test: sample_distribution_d_from(test_n, d, seed, TEST_OFFSET)?,
        });
    }
    let teacher = NetParams::init(d, &[cfg.usize("gap.teacher_width")], 1, Init::Gaussian { scale: 1.0 }, seed.derive(tags::TEACHER))?;
    let mode = if regression {
        TeacherMode::Regression
    } else {
        TeacherMode::Classification { margin_floor: cfg.f64("gap.teacher_margin") }
    };
    Ok(Split {
        train: sample_teacher_net(n, d, &teacher, mode, seed)?,
        test: sample_teacher_net_from(test_n, d, &teacher, mode, seed, TEST_OFFSET)?,
    })
}

fn kernel_error(cfg: &Config, s: &Split, regression: bool) -> Result<f64> {
    let k = NtkConfig::new(cfg.f64("kernel.tau1"), cfg.f64("kernel.tau2"))?;
    if regression {
        let m = fit_kernel_ridge(&s.train, k, cfg.f64("kernel.ridge"))?;
        Ok(kernel_truncated_squared_loss(&m, &s.test)?)
    } else {
        let fit = KernelLogisticConfig { reg: cfg.f64("kernel.reg"), steps: cfg.usize("kernel.steps"), lr: None };
        let m = fit_kernel_logistic(&s.train, k, fit)?;
        Ok(kernel_test_error(&m, &s.test)?)
    }
}

fn net_error(cfg: &Config, s: &Split, regression: bool, seed: Seed) -> Result<f64> {
    let p = if regression { "reg" } else { "net" };
    let n = s.train.n();
    let width = match cfg.usize(&format!("{p}.width")) {
        0 => n,
        w => w,
    };
    let d = s.train.d();
    let init = Init::FanIn { scale: cfg.f64(&format!("{p}.init_scale")) };
    let p0 = NetParams::init(d, &[width], 1, init, seed.derive(tags::NET_INIT))?;
    let tc = TrainConfig {
        lambda: cfg.f64(&format!("{p}.lambda")),
        r: 2.0,
        lr: cfg.f64(&format!("{p}.lr")),
        steps: cfg.usize(&format!("{p}.steps")),
        loss: if regression { LossKind::Squared } else { LossKind::Logistic },
    };
    let out = train(&p0, &s.train, &tc)?;
    if regression {
        Ok(truncated_squared_error(&out.params, &s.test)?)
    } else {
        Ok(classification_error(&out.params, &s.test)?)
    }
}

pub fn run(cfg: &Config) -> Result<(Report, GapResult)> {
    let ns = cfg.usize_list("gap.ns");
    let regression = cfg.raw("gap.mode") == "regression";
    let results = per_seed(cfg, |s| {
        let seed = Seed(s);
        let mut out = Vec::new();
        for &n in &ns {
            let sp = split(cfg, n, seed).with_context(|| format!("sampling data (n={n}, seed={s})"))?;
            let k = kernel_error(cfg, &sp, regression).with_context(|| format!("kernel fit (n={n}, seed={s})"))?;
            let e = net_error(cfg, &sp, regression, seed).with_context(|| format!("net training (n={n}, seed={s})"))?;
            out.push((n, k, e));
        }
        Ok(out)
    })?;

    let mut per_seed_rows = Vec::new();
    for (s, rows) in &results {
        for &(n, k, e) in rows {
            per_seed_rows.push((n, "kernel", *s, k));
            per_seed_rows.push((n, "net", *s, e));
        }
    }
    let mut rows = Vec::new();
    for &n in &ns {
        for method in ["kernel", "net"] {
            let v: Vec<f64> = per_seed_rows.iter().filter(|r| r.0 == n && r.1 == method).map(|r| r.3).collect();
            rows.push(GapRow { n, method, mean: mean(&v), stderr: stderr(&v), seeds: v.len() });
        }
    }

    let mut agg = Table::new(&["n", "method", "mean_test_err", "stderr", "seeds"]);
    for r in &rows {
        agg.push(vec![r.n.to_string(), r.method.into(), num(r.mean), num(r.stderr), r.seeds.to_string()]);
    }
    let mut raw = Table::new(&["n", "method", "seed", "test_err"]);
    for r in &per_seed_rows {
        raw.push(vec![r.0.to_string(), r.1.into(), r.2.to_string(), num(r.3)]);
    }
    let metric = if regression { "truncated squared loss" } else { "0-1 error" };
    let plot = PlotSpec::new(&format!("test {metric} vs n"), "n", &["mean_test_err"]).err("stderr").group("method");
    let mut summary = Vec::new();
    for &n in &ns {
        let k = rows.iter().find(|r| r.n == n && r.method == "kernel").map(|r| r.mean).unwrap_or(f64::NAN);
        let e = rows.iter().find(|r| r.n == n && r.method == "net").map(|r| r.mean).unwrap_or(f64::NAN);
        summary.push(format!("n={n}: kernel {k:.4}, net {e:.4}, gap {:.4}", k - e));
    }
    let report = Report {
        artifacts: vec![Artifact::new("gap", agg, Some(plot)), Artifact::new("gap_seeds", raw, None)],
        summary,
    };
    Ok((report, GapResult { rows, per_seed: per_seed_rows }))
}
