//! Experiment drivers. Each one resolves its knobs from a [`Config`], runs its seeds in
//! parallel and returns tables ready to be written.

pub mod gap;
pub mod gram;
pub mod lowerbound;
pub mod margin_convergence;
pub mod reg_ablation;
pub mod wgf;
pub mod width_sweep;

use anyhow::Result;
use rayon::prelude::*;

use crate::config::{Config, Key, Preset};
use crate::svg::PlotSpec;
use crate::table::Table;

pub use marginlab::stats::{mean, stderr};

pub struct Artifact {
    pub stem: String,
    pub table: Table,
    pub plot: Option<PlotSpec>,
}

impl Artifact {
    pub fn new(stem: &str, table: Table, plot: Option<PlotSpec>) -> Artifact {
        Artifact { stem: stem.into(), table, plot }
    }
}

#[derive(Default)]
pub struct Report {
    pub artifacts: Vec<Artifact>,
    /// Human-readable lines printed after the run.
    pub summary: Vec<String>,
}

/// Static description of a subcommand's configuration surface.
pub struct Surface {
    pub schema: &'static [Key],
    pub presets: &'static [Preset],
}

/// Per-seed work, run in parallel with results kept in seed order.
pub fn per_seed<T, F>(cfg: &Config, f: F) -> Result<Vec<(u64, T)>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let base = cfg.u64("seed");
    let seeds: Vec<u64> = (0..cfg.u64("seeds")).map(|k| base + k).collect();
    seeds.into_par_iter().map(|s| f(s).map(|v| (s, v))).collect()
}
