//! Regularized against unregularized training from the same large initialization.
//!
//! Both runs share data and initial weights. Every `trace_every` steps the trace records the
//! normalized margin, test accuracy and the fraction of hidden activations whose sign differs
//! from the initial network.

use anyhow::{Context, Result};
use marginlab::data::{sample_teacher_net, sample_teacher_net_from, TeacherMode};
use marginlab::net::{activation_drift, classification_error, normalized_margin, train, Init, LossKind, NetParams, TrainConfig};
use marginlab::rng::tags;
use marginlab::Seed;

use super::{mean, per_seed, stderr, Artifact, Report, Surface};
use crate::config::{key, Config, Key, Kind, Preset};
use crate::svg::PlotSpec;
use crate::table::{num, Table};

static SCHEMA: [Key; 14] = [
    key("seed", "0", Kind::Int, "first seed"),
    key("seeds", "3", Kind::Int, "trials"),
    key("abl.n", "200", Kind::Int, "training set size"),
    key("abl.d", "20", Kind::Int, "input dimension"),
    key("abl.test_n", "2000", Kind::Int, "test set size"),
    key("abl.teacher_width", "10", Kind::Int, "hidden units of the teacher net"),
    key("abl.teacher_margin", "0.01", Kind::Float, "rejection floor on |teacher(x)|"),
    key("abl.lambdas", "0.0005,0", Kind::FloatList, "weight decay values compared"),
    key("abl.trace_every", "500", Kind::Int, "steps between trace rows"),
    key("net.width", "100", Kind::Int, "hidden units"),
    key("net.init_scale", "1", Kind::PositiveFloat, "standard deviation of the Gaussian init"),
    key("net.lr", "0.1", Kind::PositiveFloat, "learning rate"),
    key("net.steps", "5000", Kind::Int, "gradient steps"),
    key("net.r", "2", Kind::PositiveFloat, "norm exponent of the penalty"),
];

static PRESETS: [Preset; 1] = [Preset { name: "full", values: &[("seeds", "20"), ("net.steps", "20000"), ("abl.trace_every", "1000")] }];

pub static SURFACE: Surface = Surface { schema: &SCHEMA, presets: &PRESETS };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub step: usize,
    pub margin: f64,
    pub test_acc: f64,
    pub drift: f64,
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    /// `(lambda, seed, trace)`.
    pub traces: Vec<(f64, u64, Vec<TracePoint>)>,
}

impl AblationResult {
    /// Seed-mean of the last trace point for one lambda.
    pub fn final_mean(&self, lambda: f64) -> Option<TracePoint> {
        let last: Vec<TracePoint> = self.traces.iter().filter(|t| t.0 == lambda).filter_map(|t| t.2.last().copied()).collect();
        if last.is_empty() {
            return None;
        }
        let f = |g: fn(&TracePoint) -> f64| mean(&last.iter().map(g).collect::<Vec<_>>());
        Some(TracePoint { step: last[0].step, margin: f(|p| p.margin), test_acc: f(|p| p.test_acc), drift: f(|p| p.drift) })
    }
}

fn margin_of(p: &NetParams, data: &marginlab::data::Dataset) -> Result<f64> {
    match normalized_margin(p, data) {
        Ok(r) => Ok(r.normalized_margin),
        Err(marginlab::Error::Degenerate(_)) => Ok(0.0),
        Err(e) => Err(e.into()),
    }
}

pub fn run(cfg: &Config) -> Result<(Report, AblationResult)> {
    let d = cfg.usize("abl.d");
    let lambdas = cfg.f64_list("abl.lambdas");
    let steps = cfg.usize("net.steps");
    let every = cfg.usize("abl.trace_every").max(1);
    let per = per_seed(cfg, |s| -> Result<Vec<(f64, Vec<TracePoint>)>> {
        let seed = Seed(s);
        let teacher = NetParams::init(d, &[cfg.usize("abl.teacher_width")], 1, Init::Gaussian { scale: 1.0 }, seed.derive(tags::TEACHER))?;
        let mode = TeacherMode::Classification { margin_floor: cfg.f64("abl.teacher_margin") };
        let tr = sample_teacher_net(cfg.usize("abl.n"), d, &teacher, mode, seed).with_context(|| format!("sampling data (seed={s})"))?;
        let te = sample_teacher_net_from(cfg.usize("abl.test_n"), d, &teacher, TeacherMode::Classification { margin_floor: 0.0 }, seed, 1 << 32)?;
        let p0 = NetParams::init(d, &[cfg.usize("net.width")], 1, Init::Gaussian { scale: cfg.f64("net.init_scale") }, seed.derive(tags::NET_INIT))?;
        let mut out = Vec::new();
        for &lambda in &lambdas {
            let point = |step: usize, p: &NetParams| -> Result<TracePoint> {
                Ok(TracePoint { step, margin: margin_of(p, &tr)?, test_acc: 1.0 - classification_error(p, &te)?, drift: activation_drift(&p0, p, &tr)? })
            };
            let mut p = p0.clone();
            let mut trace = vec![point(0, &p)?];
            let mut done = 0;
            while done < steps {
                let chunk = every.min(steps - done);
                let tc = TrainConfig { lambda, r: cfg.f64("net.r"), lr: cfg.f64("net.lr"), steps: chunk, loss: LossKind::Logistic };
                p = train(&p, &tr, &tc).with_context(|| format!("training lambda={lambda} (seed={s}, step {done})"))?.params;
                done += chunk;
                trace.push(point(done, &p)?);
            }
            out.push((lambda, trace));
        }
        Ok(out)
    })?;

    let traces: Vec<(f64, u64, Vec<TracePoint>)> = per.into_iter().flat_map(|(s, v)| v.into_iter().map(move |(l, t)| (l, s, t))).collect();
    let mut raw = Table::new(&["lambda", "seed", "step", "margin", "test_acc", "drift"]);
    for (l, s, t) in &traces {
        for p in t {
            raw.push(vec![num(*l), s.to_string(), p.step.to_string(), num(p.margin), num(p.test_acc), num(p.drift)]);
        }
    }
    let result = AblationResult { traces };
    let mut artifacts = Vec::new();
    let plot = |title: &str, col: &str, err: Option<&str>| {
        let p = PlotSpec::new(title, "step", &[col]).group("lambda");
        match err {
            Some(e) => p.err(e),
            None => p,
        }
    };
    if cfg.usize("seeds") <= 1 {
        for (stem, col) in [("reg_ablation", "test_acc"), ("reg_ablation_margin", "margin"), ("reg_ablation_drift", "drift")] {
            artifacts.push(Artifact::new(stem, raw.clone(), Some(plot(&format!("{col} vs step"), col, None))));
        }
    } else {
        let mut agg = Table::new(&["lambda", "step", "margin", "margin_stderr", "test_acc", "test_acc_stderr", "drift", "drift_stderr", "seeds"]);
        for &l in &lambdas {
            let runs: Vec<&Vec<TracePoint>> = result.traces.iter().filter(|t| t.0 == l).map(|t| &t.2).collect();
            let len = runs.first().map_or(0, |r| r.len());
            for k in 0..len {
                let col = |g: fn(&TracePoint) -> f64| runs.iter().map(|r| g(&r[k])).collect::<Vec<f64>>();
                let (m, a, dr) = (col(|p| p.margin), col(|p| p.test_acc), col(|p| p.drift));
                agg.push(vec![
                    num(l),
                    runs[0][k].step.to_string(),
                    num(mean(&m)),
                    num(stderr(&m)),
                    num(mean(&a)),
                    num(stderr(&a)),
                    num(mean(&dr)),
                    num(stderr(&dr)),
                    runs.len().to_string(),
                ]);
            }
        }
        artifacts.push(Artifact::new("reg_ablation", agg.clone(), Some(plot("test accuracy vs step", "test_acc", Some("test_acc_stderr")))));
        artifacts.push(Artifact::new("reg_ablation_margin", agg.clone(), Some(plot("normalized margin vs step", "margin", Some("margin_stderr")))));
        artifacts.push(Artifact::new("reg_ablation_drift", agg, Some(plot("activation drift vs step", "drift", Some("drift_stderr")))));
        artifacts.push(Artifact::new("reg_ablation_seeds", raw, None));
    }
    let summary = lambdas
        .iter()
        .filter_map(|&l| result.final_mean(l).map(|p| format!("lambda {l}: test acc {:.4}, margin {:.5}, drift {:.4}", p.test_acc, p.margin, p.drift)))
        .collect();
    Ok((Report { artifacts, summary }, result))
}
