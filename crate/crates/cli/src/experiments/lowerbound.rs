//! Probes of the kernel lower-bound machinery on distribution D.
//!
//! Each probe writes `lowerbound_<probe>.csv` with columns `statistic, value, low, high`;
//! `low`/`high` hold an interval where one exists and repeat the value otherwise.

use anyhow::{bail, Context, Result};
use marginlab::data::{sample_distribution_d, Dataset};
use marginlab::lowerbound::{
    cancellation_residuals, cube_exp_bruteforce, f_tilde_mass_probe, fit_symmetrization_constant, poly_g_residual, sample_tail, with_head, PolyG,
    MAX_CUBE_DIM,
};
use marginlab::ntk::{fit_kernel_ridge, NtkConfig};
use marginlab::rng::tags;
use marginlab::stats::ols_slope;
use marginlab::Seed;
use rand::Rng;

use super::{Artifact, Report, Surface};
use crate::config::{key, Config, Key, Kind};
use crate::svg::PlotSpec;
use crate::table::{num, Table};

pub const PROBES: &[&str] = &["cube-exp", "residuals", "poly-g", "mass"];

static SCHEMA: [Key; 14] = [
    key("seed", "0", Kind::Int, "seed for random instances"),
    key("seeds", "1", Kind::Int, "unused; probes are single runs"),
    key("lb.probe", "cube-exp", Kind::Choice(PROBES), "which probe to run"),
    key("lb.d", "0", Kind::Int, "dimension; 0 picks the probe default (8 for cube-exp, 20 otherwise)"),
    key("lb.trials", "400", Kind::Int, "Monte Carlo draws (residuals, mass)"),
    key("lb.p", "1", Kind::Int, "first exponent of cube-exp"),
    key("lb.q", "2", Kind::Int, "second exponent of cube-exp"),
    key("lb.support", "4", Kind::Int, "support points of the random cube-exp instance"),
    key("lb.ds", "64,128,256,512", Kind::IntList, "dimensions of the residual sweep"),
    key("lb.tau1", "1", Kind::Float, "kernel weight of K1"),
    key("lb.tau2", "1", Kind::Float, "kernel weight of K1 + K2"),
    key("lb.grid_step", "0.001", Kind::PositiveFloat, "spacing of the poly-g grid on [-0.75, 0.75]"),
    key("lb.multipliers", "0,0.5,1,1.5,3", Kind::FloatList, "threshold multipliers of the mass probe"),
    key("lb.ridge", "0.000001", Kind::PositiveFloat, "kernel ridge penalty for the mass probe fit"),
];

pub static SURFACE: Surface = Surface { schema: &SCHEMA, presets: &[] };

/// `(statistic, value)` pairs keyed by name, in output order.
#[derive(Debug, Clone, Default)]
pub struct ProbeResult {
    pub rows: Vec<(String, f64, f64, f64)>,
}

impl ProbeResult {
    fn push(&mut self, name: impl Into<String>, v: f64) {
        self.rows.push((name.into(), v, v, v));
    }
    fn push_interval(&mut self, name: impl Into<String>, v: f64, lo: f64, hi: f64) {
        self.rows.push((name.into(), v, lo, hi));
    }
    pub fn get(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.0 == name).map(|r| r.1)
    }
}

fn signs(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect()
}

fn cube_exp(cfg: &Config, d: usize, seed: Seed) -> Result<ProbeResult> {
    if d > MAX_CUBE_DIM {
        bail!("cube-exp enumerates 2^d points; d must be at most {MAX_CUBE_DIM}, got {d}");
    }
    let (p, q) = (cfg.usize("lb.p") as u32, cfg.usize("lb.q") as u32);
    let mut rng = seed.rng(tags::LOWERBOUND);
    let k = cfg.usize("lb.support").max(1);
    let zs: Vec<Vec<f64>> = (0..k).map(|_| signs(d, &mut rng)).collect();
    let beta: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let v = cube_exp_bruteforce(d, &zs, &beta, p, q)?;
    let mut r = ProbeResult::default();
    r.push("expectation", v);
    r.push("d", d as f64);
    r.push("p", p as f64);
    r.push("q", q as f64);
    Ok(r)
}

fn residuals(cfg: &Config, seed: Seed) -> Result<(ProbeResult, Table)> {
    let ds = cfg.usize_list("lb.ds");
    let trials = cfg.usize("lb.trials");
    let mut table = Table::new(&["d", "k1_mean", "k1_max", "k2_mean", "k2_max"]);
    let (mut lx, mut l1, mut l2) = (Vec::new(), Vec::new(), Vec::new());
    for &d in &ds {
        let tail: Vec<f64> = sample_tail(d, seed, d as u64).iter().copied().collect();
        let x = with_head(1.0, 0.0, &tail);
        let s = cancellation_residuals(&x, d, trials, seed.derive(d as u64)).with_context(|| format!("residuals at d={d}"))?;
        table.push(vec![d.to_string(), num(s.k1_mean), num(s.k1_max), num(s.k2_mean), num(s.k2_max)]);
        lx.push((d as f64).ln());
        l1.push(s.k1_mean.ln());
        l2.push(s.k2_mean.ln());
    }
    let mut r = ProbeResult::default();
    if ds.len() >= 2 && trials > 0 {
        r.push("k1_slope", ols_slope(&lx, &l1));
        r.push("k2_slope", ols_slope(&lx, &l2));
    }
    Ok((r, table))
}

fn poly_g(cfg: &Config, d: usize) -> Result<(ProbeResult, Table)> {
    let (tau1, tau2) = (cfg.f64("lb.tau1"), cfg.f64("lb.tau2"));
    let h = cfg.f64("lb.grid_step");
    let k = (0.75 / h).floor() as i64;
    let mut table = Table::new(&["t", "residual", "bound"]);
    let mut worst: f64 = f64::NEG_INFINITY;
    for i in -k..=k {
        let t = i as f64 * h;
        let res = poly_g_residual(t, tau1, tau2, d)?;
        let bound = (d - 1) as f64 * (tau1 + tau2) * t.abs().powi(5);
        worst = worst.max(res - bound);
        table.push(vec![num(t), num(res), num(bound)]);
    }
    let g = PolyG::new(d, tau1, tau2);
    let expected = (tau1 + tau2 / 2.0) / (std::f64::consts::PI * (d - 1) as f64);
    let mut r = ProbeResult::default();
    r.push("max_residual_minus_bound", worst);
    r.push("a2", g.a2());
    r.push("a2_expected", expected);
    r.push("a2_abs_error", (g.a2() - expected).abs());
    r.push("cubic_coefficient", g.coeffs[3]);
    Ok((r, table))
}

fn mass(cfg: &Config, d: usize, seed: Seed) -> Result<(ProbeResult, Table)> {
    let n = (d * d / 4).max(1);
    let k = NtkConfig::new(cfg.f64("lb.tau1"), cfg.f64("lb.tau2"))?;
    let data = sample_distribution_d(n, d, seed)?;
    let reg = Dataset::regression(&data.design(), &data.targets())?;
    let model = fit_kernel_ridge(&reg, k, cfg.f64("lb.ridge")).context("kernel fit")?;
    let beta: Vec<f64> = model.beta.iter().copied().collect();
    let xs: Vec<Vec<f64>> = data.examples().iter().map(|e| e.x.as_slice().to_vec()).collect();
    let tails: Vec<Vec<f64>> = xs.iter().map(|x| x[2..].to_vec()).collect();
    let trials = cfg.usize("lb.trials");
    let c = fit_symmetrization_constant(&xs, &beta, k, d, trials, seed.derive(1)).context("fitting the symmetrization constant")?;
    let mut r = ProbeResult::default();
    r.push("n", n as f64);
    r.push("symmetrization_c", c);
    let mut table = Table::new(&["multiplier", "threshold", "probability", "low", "high"]);
    for &m in &cfg.f64_list("lb.multipliers") {
        let p = f_tilde_mass_probe(&tails, &beta, k, d, c, m, trials, seed.derive(2))?;
        r.push_interval(format!("probability@{m}"), p.estimate, p.wilson_low, p.wilson_high);
        table.push(vec![num(m), num(p.threshold), num(p.estimate), num(p.wilson_low), num(p.wilson_high)]);
    }
    Ok((r, table))
}

pub fn run(cfg: &Config) -> Result<(Report, ProbeResult)> {
    let probe = cfg.raw("lb.probe").to_string();
    let seed = Seed(cfg.u64("seed"));
    let d = match cfg.usize("lb.d") {
        0 if probe == "cube-exp" => 8,
        0 => 20,
        d => d,
    };
    let (result, extra) = match probe.as_str() {
        "cube-exp" => (cube_exp(cfg, d, seed)?, None),
        "residuals" => {
            let (r, t) = residuals(cfg, seed)?;
            (r, Some(Artifact::new("lowerbound_residuals_by_d", t, Some(PlotSpec::new("mean residual vs d", "d", &["k1_mean", "k2_mean"]).log_x().log_y()))))
        }
        "poly-g" => {
            let (r, t) = poly_g(cfg, d)?;
            (r, Some(Artifact::new("lowerbound_poly_g_grid", t, Some(PlotSpec::new("Taylor residual of g", "t", &["residual", "bound"])))))
        }
        "mass" => {
            let (r, t) = mass(cfg, d, seed)?;
            (r, Some(Artifact::new("lowerbound_mass_curve", t, Some(PlotSpec::new("mass above threshold", "multiplier", &["probability"])))))
        }
        other => bail!("unknown probe {other}"),
    };
    let mut table = Table::new(&["statistic", "value", "low", "high"]);
    for (name, v, lo, hi) in &result.rows {
        table.push(vec![name.clone(), num(*v), num(*lo), num(*hi)]);
    }
    let stem = format!("lowerbound_{}", probe.replace('-', "_"));
    let mut artifacts = vec![Artifact::new(&stem, table, None)];
    artifacts.extend(extra);
    // cube-exp prints the bare expectation first so scripts can read it directly.
    let mut summary = Vec::new();
    if probe == "cube-exp" {
        summary.push(num(result.get("expectation").unwrap_or(f64::NAN)));
    }
    summary.extend(result.rows.iter().map(|(name, v, lo, hi)| if lo == hi { format!("{name} = {}", num(*v)) } else { format!("{name} = {} [{}, {}]", num(*v), num(*lo), num(*hi)) }));
    Ok((Report { artifacts, summary }, result))
}
