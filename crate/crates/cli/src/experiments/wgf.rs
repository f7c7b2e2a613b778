//! Perturbed Wasserstein gradient flow on distribution D with its diagnostics, and a
//! finite-width gradient descent baseline started from the same particles.

use anyhow::{Context, Result};
use marginlab::data::sample_distribution_d;
use marginlab::net::{train, LossKind, NetParams, TrainConfig};
use marginlab::rng::tags;
use marginlab::wgf::{self, second_moment_bound, window_increase_bound, ParticleEnsemble, TraceRow, WgfConfig, WgfData};
use marginlab::Seed;
use nalgebra::DMatrix;

use super::{Artifact, Report, Surface};
use crate::config::{key, Config, Key, Kind};
use crate::svg::PlotSpec;
use crate::table::{num, Table};

static SCHEMA: [Key; 18] = [
    key("seed", "0", Kind::Int, "seed for data, initial particles and injections"),
    key("seeds", "1", Kind::Int, "unused; the flow is a single run"),
    key("wgf.d", "5", Kind::Int, "input dimension"),
    key("wgf.n", "32", Kind::Int, "training set size"),
    key("wgf.lambda", "0.001", Kind::Float, "coefficient of V(theta) = lambda |theta|^2"),
    key("wgf.eta", "0.01", Kind::PositiveFloat, "step size"),
    key("wgf.sigma", "0.0001", Kind::Float, "noise rate"),
    key("wgf.steps", "100000", Kind::Int, "number of steps"),
    key("wgf.particles", "512", Kind::Int, "initial particles"),
    key("wgf.init_scale", "1", Kind::PositiveFloat, "standard deviation of initial particle coordinates"),
    key("wgf.inject", "1", Kind::Int, "particles injected per step"),
    key("wgf.prune", "0", Kind::Float, "weight below which particles are removed"),
    key("wgf.cap", "1024", Kind::Int, "particle cap"),
    key("wgf.grace", "500", Kind::Int, "steps a new particle is protected from the cap"),
    key("wgf.window", "100", Kind::Int, "longest window for the loss-increase check"),
    key("wgf.slack", "0.001", Kind::Float, "discretization slack of the loss-increase check"),
    key("wgf.trace_every", "100", Kind::Int, "write every k-th trace row (the last row is always written)"),
    key("wgf.baseline", "true", Kind::Bool, "also train the finite-width net from the initial particles"),
];

pub static SURFACE: Surface = Surface { schema: &SCHEMA, presets: &[] };

#[derive(Debug, Clone)]
pub struct WgfDiagnostics {
    pub trace: Vec<TraceRow>,
    /// `max_t |mass_t - 1|`.
    pub max_mass_dev: f64,
    /// `max_t (W_t^2 - bound_t)` over steps where the bound is defined; negative when it holds.
    pub max_moment_excess: f64,
    /// Steps at which the second-moment bound is defined.
    pub moment_bound_steps: usize,
    /// `max (L_{t+k} - L_t - allowed(k))` over windows `k <= window`.
    pub max_window_excess: f64,
    pub min_loss: f64,
    /// Lowest unaveraged objective reached by the finite-width baseline.
    pub baseline_best: Option<f64>,
}

impl WgfDiagnostics {
    pub fn ratio(&self) -> Option<f64> {
        self.baseline_best.map(|b| self.min_loss / b)
    }
}

/// Two-layer net computing the same function as the equal-weight ensemble: unit `j` becomes
/// top weight `w_j / sqrt(m)` and bottom row `u_j / sqrt(m)`, so `|Theta|_F^2 = int |theta|^2 drho`.
pub fn ensemble_as_net(ens: &ParticleEnsemble, d: usize) -> Result<NetParams> {
    let m = ens.len();
    let s = 1.0 / (m as f64).sqrt();
    let mut w1 = DMatrix::zeros(m, d);
    let mut w2 = DMatrix::zeros(1, m);
    for (j, p) in ens.particles.iter().enumerate() {
        w2[(0, j)] = p.theta[0] * s;
        for k in 0..d {
            w1[(j, k)] = p.theta[k + 1] * s;
        }
    }
    Ok(NetParams::new(vec![w1, w2])?)
}

pub fn run(cfg: &Config) -> Result<(Report, WgfDiagnostics)> {
    let seed = Seed(cfg.u64("seed"));
    let (d, n) = (cfg.usize("wgf.d"), cfg.usize("wgf.n"));
    let data = sample_distribution_d(n, d, seed).context("sampling data")?;
    let wd = WgfData::new(&data)?;
    let wc = WgfConfig {
        sigma: cfg.f64("wgf.sigma"),
        eta: cfg.f64("wgf.eta"),
        lambda: cfg.f64("wgf.lambda"),
        inject_count: cfg.usize("wgf.inject"),
        prune_threshold: cfg.f64("wgf.prune"),
        steps: cfg.usize("wgf.steps"),
        max_particles: cfg.usize("wgf.cap"),
        grace_steps: cfg.usize("wgf.grace"),
    };
    let ens0 = ParticleEnsemble::gaussian(cfg.usize("wgf.particles"), d, cfg.f64("wgf.init_scale"), seed.derive(tags::WGF_INIT))?;
    let base = if cfg.bool("wgf.baseline") {
        let p0 = ensemble_as_net(&ens0, d)?;
        // The net objective is averaged over examples, so lambda and the step size are rescaled by n.
        let tc = TrainConfig { lambda: wc.lambda / n as f64, r: 2.0, lr: n as f64 * wc.eta, steps: wc.steps, loss: LossKind::Logistic };
        let out = train(&p0, &data, &tc).context("baseline training")?;
        Some(out.loss_trace.iter().map(|l| l * n as f64).collect::<Vec<f64>>())
    } else {
        None
    };
    let out = wgf::run(&ens0, &wd, &wc, seed.derive(tags::WGF_INJECT)).context("flow")?;
    let trace = out.trace;

    let c = wd.constants(wc.lambda);
    let l0 = trace[0].loss;
    let w_max = trace.iter().map(|r| r.second_moment).fold(0.0, f64::max);
    let mut max_mass_dev: f64 = 0.0;
    let mut max_moment_excess = f64::NEG_INFINITY;
    let mut moment_bound_steps = 0;
    for (t, row) in trace.iter().enumerate() {
        max_mass_dev = max_mass_dev.max((row.total_mass - 1.0).abs());
        if let Some(b) = second_moment_bound(l0, t, &wc, &c) {
            moment_bound_steps += 1;
            max_moment_excess = max_moment_excess.max(row.second_moment - b);
        }
    }
    let window = cfg.usize("wgf.window");
    let slack = cfg.f64("wgf.slack");
    let allowed: Vec<f64> = (0..=window).map(|k| window_increase_bound(k, w_max, &wc, &c, slack)).collect();
    let mut max_window_excess = f64::NEG_INFINITY;
    for t in 0..trace.len() {
        for k in 1..=window.min(trace.len() - 1 - t) {
            max_window_excess = max_window_excess.max(trace[t + k].loss - trace[t].loss - allowed[k]);
        }
    }
    let min_loss = trace.last().map_or(f64::NAN, |r| r.min_loss);
    let baseline_best = base.as_ref().map(|b| b.iter().copied().fold(f64::INFINITY, f64::min));

    let every = cfg.usize("wgf.trace_every").max(1);
    let mut header = vec!["step", "loss", "second_moment", "n_particles", "min_loss", "total_mass"];
    if base.is_some() {
        header.push("baseline_loss");
    }
    let mut table = Table::new(&header);
    for (t, r) in trace.iter().enumerate() {
        if t % every != 0 && t + 1 != trace.len() {
            continue;
        }
        let mut row = vec![r.step.to_string(), num(r.loss), num(r.second_moment), r.n_particles.to_string(), num(r.min_loss), num(r.total_mass)];
        if let Some(b) = &base {
            row.push(num(b[t]));
        }
        table.push(row);
    }
    let mut ys = vec!["loss"];
    if base.is_some() {
        ys.push("baseline_loss");
    }
    let diag = WgfDiagnostics { trace, max_mass_dev, max_moment_excess, moment_bound_steps, max_window_excess, min_loss, baseline_best };
    let mut summary = vec![
        format!("min loss {:.6} over {} steps, final particles {}", diag.min_loss, wc.steps, diag.trace.last().map_or(0, |r| r.n_particles)),
        format!("max mass deviation {:.3e}", diag.max_mass_dev),
        format!("second-moment bound defined on {} steps, max excess {:.4e}", diag.moment_bound_steps, diag.max_moment_excess),
        format!("window bound (k <= {window}) max excess {:.4e}", diag.max_window_excess),
    ];
    if let (Some(b), Some(r)) = (diag.baseline_best, diag.ratio()) {
        summary.push(format!("baseline best {b:.6}, ratio {r:.4}"));
    }
    let report = Report {
        artifacts: vec![
            Artifact::new("wgf_trace", table.clone(), Some(PlotSpec::new("objective vs step", "step", &ys).log_y())),
            Artifact::new("wgf_moment", table, Some(PlotSpec::new("second moment vs step", "step", &["second_moment"]))),
        ],
        summary,
    };
    Ok((report, diag))
}
