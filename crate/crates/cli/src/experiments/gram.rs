//! Dumps the kernel Gram matrix of a sampled dataset together with its spectrum.

use anyhow::{Context, Result};
use marginlab::data::{sample_distribution_d, sample_teacher_net, TeacherMode};
use marginlab::net::{Init, NetParams};
use marginlab::ntk::{gram, NtkConfig};
use marginlab::rng::tags;
use marginlab::Seed;

use super::{Artifact, Report, Surface};
use crate::config::{key, Config, Key, Kind};
use crate::svg::PlotSpec;
use crate::table::{num, Table};

static SCHEMA: [Key; 8] = [
    key("seed", "0", Kind::Int, "data seed"),
    key("seeds", "1", Kind::Int, "unused"),
    key("gram.dist", "D", Kind::Choice(&["D", "teacher"]), "data source"),
    key("gram.n", "64", Kind::Int, "number of points"),
    key("gram.d", "20", Kind::Int, "input dimension"),
    key("gram.teacher_width", "10", Kind::Int, "hidden units of the teacher net"),
    key("kernel.tau1", "1", Kind::Float, "weight of K1"),
    key("kernel.tau2", "1", Kind::Float, "weight of K1 + K2"),
];

pub static SURFACE: Surface = Surface { schema: &SCHEMA, presets: &[] };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramStats {
    pub n: usize,
    pub trace: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

pub fn run(cfg: &Config) -> Result<(Report, GramStats)> {
    let seed = Seed(cfg.u64("seed"));
    let (n, d) = (cfg.usize("gram.n"), cfg.usize("gram.d"));
    let data = if cfg.raw("gram.dist") == "D" {
        sample_distribution_d(n, d, seed)?
    } else {
        let teacher = NetParams::init(d, &[cfg.usize("gram.teacher_width")], 1, Init::Gaussian { scale: 1.0 }, seed.derive(tags::TEACHER))?;
        sample_teacher_net(n, d, &teacher, TeacherMode::Classification { margin_floor: 0.0 }, seed)?
    };
    let g = gram(&data, NtkConfig::new(cfg.f64("kernel.tau1"), cfg.f64("kernel.tau2"))?).context("gram matrix")?;
    let mut eig: Vec<f64> = g.clone().symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let stats = GramStats { n, trace: g.trace(), min_eigenvalue: *eig.last().unwrap_or(&f64::NAN), max_eigenvalue: *eig.first().unwrap_or(&f64::NAN) };

    let mut entries = Table::new(&["i", "j", "k"]);
    for i in 0..n {
        for j in 0..n {
            entries.push(vec![i.to_string(), j.to_string(), num(g[(i, j)])]);
        }
    }
    let mut spectrum = Table::new(&["rank", "eigenvalue"]);
    for (k, v) in eig.iter().enumerate() {
        spectrum.push(vec![(k + 1).to_string(), num(*v)]);
    }
    let summary = vec![
        format!("n={n} d={d} trace {:.6}", stats.trace),
        format!("eigenvalues in [{:.6e}, {:.6e}], min / trace = {:.3e}", stats.min_eigenvalue, stats.max_eigenvalue, stats.min_eigenvalue / stats.trace),
    ];
    let report = Report {
        artifacts: vec![
            Artifact::new("gram", entries, None),
            Artifact::new("gram_spectrum", spectrum, Some(PlotSpec::new("Gram spectrum", "rank", &["eigenvalue"]))),
        ],
        summary,
    };
    Ok((report, stats))
}
