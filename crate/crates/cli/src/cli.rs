//! Command-line parsing and dispatch.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{error::ErrorKind, Args, CommandFactory, Parser, Subcommand};

use crate::config::{Config, ConfigError};
use crate::experiments::{self, Report, Surface};
use crate::manifest::RunWriter;

#[derive(Debug, Parser)]
#[command(name = "marginlab", version, about = "Margin, kernel and mean-field experiments on small synthetic problems")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// File of `key=value` lines applied over the defaults and preset.
    #[arg(long, global = true, help_heading = "Global options", value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// First seed.
    #[arg(long, global = true, help_heading = "Global options")]
    pub seed: Option<String>,
    /// Number of seeds.
    #[arg(long, global = true, help_heading = "Global options")]
    pub seeds: Option<String>,
    /// Output directory [default: out/<command>].
    #[arg(long, global = true, help_heading = "Global options", value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Named bundle of settings, e.g. gG1 for width-sweep.
    #[arg(long, global = true, help_heading = "Global options")]
    pub preset: Option<String>,
    /// Override any configuration key; repeatable.
    #[arg(long = "set", global = true, help_heading = "Global options", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true, help_heading = "Global options")]
    pub show_config: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kernel method against a trained net as the sample size grows.
    Gap(GapArgs),
    /// Trained margin and test error across hidden-layer widths.
    WidthSweep(WidthArgs),
    /// Net margin under decreasing weight decay against the l1-SVM on 1-D data.
    MarginConvergence(MarginArgs),
    /// Regularized against unregularized training from one initialization.
    RegAblation(AblationArgs),
    /// Perturbed Wasserstein gradient flow with diagnostics.
    Wgf(WgfArgs),
    /// Numerical probes of the kernel lower-bound lemmas.
    Lowerbound(LowerboundArgs),
    /// Kernel Gram matrix and spectrum of a sampled dataset.
    GramDump(GramArgs),
}

/// Collects `Some` flag values as `(config key, value)` pairs.
macro_rules! overrides {
    ($self:ident; $($field:ident => $key:literal),* $(,)?) => {{
        let mut v: Vec<(String, String)> = Vec::new();
        $(if let Some(x) = &$self.$field { v.push(($key.to_string(), x.to_string())); })*
        v
    }};
}

#[derive(Debug, Args)]
pub struct GapArgs {
    /// classification or regression.
    #[arg(long)]
    pub mode: Option<String>,
    /// Classification data: D or teacher.
    #[arg(long)]
    pub dist: Option<String>,
    /// Comma-separated training set sizes.
    #[arg(long)]
    pub ns: Option<String>,
    #[arg(long)]
    pub d: Option<String>,
}

#[derive(Debug, Args)]
pub struct WidthArgs {
    /// Comma-separated hidden layer sizes.
    #[arg(long)]
    pub widths: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub d: Option<String>,
    #[arg(long)]
    pub steps: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
}

#[derive(Debug, Args)]
pub struct MarginArgs {
    /// Comma-separated, strictly decreasing.
    #[arg(long)]
    pub lambdas: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub width: Option<String>,
    /// Steps per lambda.
    #[arg(long)]
    pub steps: Option<String>,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    #[arg(long)]
    pub lambdas: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub d: Option<String>,
    #[arg(long)]
    pub width: Option<String>,
    #[arg(long)]
    pub steps: Option<String>,
}

#[derive(Debug, Args)]
pub struct WgfArgs {
    #[arg(long)]
    pub steps: Option<String>,
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub eta: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    /// Particles injected per step.
    #[arg(long)]
    pub inject: Option<String>,
    /// Weight below which particles are dropped.
    #[arg(long)]
    pub prune: Option<String>,
    /// Initial particle count.
    #[arg(long)]
    pub particles: Option<String>,
    /// Particle cap.
    #[arg(long)]
    pub cap: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub d: Option<String>,
    /// Skip the finite-width baseline.
    #[arg(long)]
    pub no_baseline: bool,
}

#[derive(Debug, Args)]
pub struct LowerboundArgs {
    /// cube-exp, residuals, poly-g or mass.
    pub probe: Option<String>,
    #[arg(long)]
    pub d: Option<String>,
    #[arg(long)]
    pub trials: Option<String>,
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long)]
    pub q: Option<String>,
}

#[derive(Debug, Args)]
pub struct GramArgs {
    /// D or teacher.
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub d: Option<String>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gap(_) => "gap",
            Command::WidthSweep(_) => "width-sweep",
            Command::MarginConvergence(_) => "margin-convergence",
            Command::RegAblation(_) => "reg-ablation",
            Command::Wgf(_) => "wgf",
            Command::Lowerbound(_) => "lowerbound",
            Command::GramDump(_) => "gram-dump",
        }
    }

    pub fn surface(&self) -> &'static Surface {
        match self {
            Command::Gap(_) => &experiments::gap::SURFACE,
            Command::WidthSweep(_) => &experiments::width_sweep::SURFACE,
            Command::MarginConvergence(_) => &experiments::margin_convergence::SURFACE,
            Command::RegAblation(_) => &experiments::reg_ablation::SURFACE,
            Command::Wgf(_) => &experiments::wgf::SURFACE,
            Command::Lowerbound(_) => &experiments::lowerbound::SURFACE,
            Command::GramDump(_) => &experiments::gram::SURFACE,
        }
    }

    fn overrides(&self) -> Vec<(String, String)> {
        match self {
            Command::Gap(a) => overrides!(a; mode => "gap.mode", dist => "gap.data", ns => "gap.ns", d => "gap.d"),
            Command::WidthSweep(a) => overrides!(a;
                widths => "width.widths", n => "width.n", d => "width.d", steps => "net.steps", lr => "net.lr", lambda => "net.lambda"),
            Command::MarginConvergence(a) => overrides!(a; lambdas => "mc.lambdas", n => "mc.n", width => "net.width", steps => "net.steps"),
            Command::RegAblation(a) => overrides!(a; lambdas => "abl.lambdas", n => "abl.n", d => "abl.d", width => "net.width", steps => "net.steps"),
            Command::Wgf(a) => {
                let mut v = overrides!(a;
                    steps => "wgf.steps", sigma => "wgf.sigma", eta => "wgf.eta", lambda => "wgf.lambda", inject => "wgf.inject",
                    prune => "wgf.prune", particles => "wgf.particles", cap => "wgf.cap", n => "wgf.n", d => "wgf.d");
                if a.no_baseline {
                    v.push(("wgf.baseline".into(), "false".into()));
                }
                v
            }
            Command::Lowerbound(a) => overrides!(a; probe => "lb.probe", d => "lb.d", trials => "lb.trials", p => "lb.p", q => "lb.q"),
            Command::GramDump(a) => overrides!(a; dist => "gram.dist", n => "gram.n", d => "gram.d"),
        }
    }
}

/// Failures before any experiment work starts; these exit with status 2.
#[derive(Debug, thiserror::Error)]
pub enum UsageError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("--set expects KEY=VALUE, got `{0}`")]
    SetSyntax(String),
    #[error("cannot read config file {path}: {source}")]
    ConfigFile { path: String, source: std::io::Error },
}

/// Layers default < preset < config file < command line for the parsed invocation.
pub fn resolve(cli: &Cli) -> Result<Config, UsageError> {
    let surface = cli.command.surface();
    let file = match &cli.global.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|source| UsageError::ConfigFile { path: p.display().to_string(), source })?),
        None => None,
    };
    let mut layer = Vec::new();
    if let Some(s) = &cli.global.seed {
        layer.push(("seed".to_string(), s.clone()));
    }
    if let Some(s) = &cli.global.seeds {
        layer.push(("seeds".to_string(), s.clone()));
    }
    for kv in &cli.global.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| UsageError::SetSyntax(kv.clone()))?;
        layer.push((k.trim().to_string(), v.trim().to_string()));
    }
    layer.extend(cli.command.overrides());
    Ok(Config::resolve(surface.schema, surface.presets, cli.global.preset.as_deref(), file.as_deref(), &layer)?)
}

/// Runs one experiment and returns its report.
pub fn execute(command: &str, cfg: &Config) -> Result<Report> {
    Ok(match command {
        "gap" => experiments::gap::run(cfg)?.0,
        "width-sweep" => experiments::width_sweep::run(cfg)?.0,
        "margin-convergence" => experiments::margin_convergence::run(cfg)?.0,
        "reg-ablation" => experiments::reg_ablation::run(cfg)?.0,
        "wgf" => experiments::wgf::run(cfg)?.0,
        "lowerbound" => experiments::lowerbound::run(cfg)?.0,
        "gram-dump" => experiments::gram::run(cfg)?.0,
        other => anyhow::bail!("unknown command {other}"),
    })
}

/// Writes every artifact of a report plus `config.txt` and `manifest.txt`.
pub fn write_report(dir: &Path, command: &str, cfg: &Config, report: &Report) -> Result<usize> {
    let mut w = RunWriter::new(dir, command, cfg, cfg.u64("seed"))?;
    for a in &report.artifacts {
        w.table(&a.stem, &a.table, a.plot.as_ref())?;
    }
    Ok(w.finish()?.outputs.len())
}

/// Entry point shared by the binary: parses `args`, runs, and returns the exit status.
pub fn main_with(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = e.print();
                    return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 };
                }
                _ => {}
            }
            let _ = e.print();
            if e.kind() == ErrorKind::UnknownArgument {
                let mut cmd = Cli::command();
                cmd.build();
                let sub = args.iter().skip(1).find_map(|a| cmd.find_subcommand(a).map(|s| s.get_name().to_string()));
                let help = match sub {
                    Some(name) => cmd.find_subcommand_mut(&name).map(|s| s.render_help()),
                    None => Some(cmd.render_help()),
                };
                if let Some(h) = help {
                    eprintln!("\n{h}");
                }
            }
            return 2;
        }
    };
    let name = cli.command.name();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if cli.global.show_config {
        print!("{}", cfg.snapshot());
        return 0;
    }
    let out = cli.global.out.clone().unwrap_or_else(|| PathBuf::from("out").join(name));
    let run = || -> Result<(Report, usize)> {
        let report = execute(name, &cfg).with_context(|| format!("{name} failed"))?;
        let files = write_report(&out, name, &cfg, &report).context("writing outputs")?;
        Ok((report, files))
    };
    match run() {
        Ok((report, files)) => {
            for line in &report.summary {
                println!("{line}");
            }
            eprintln!("wrote {files} files to {}", out.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
