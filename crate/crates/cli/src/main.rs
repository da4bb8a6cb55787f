use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use multigibbs_cli::presets::{self, PRESETS};
use multigibbs_cli::{pipelines, Command, ExperimentConfig, Report};

#[derive(Parser)]
#[command(name = "multigibbs", version, about = "Multilinear Gibbs measures: solvers, sampler and limit checks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV and plot data.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Inverse mean map and rate function on a grid.
    Tilt {
        #[arg(long, default_value_t = 512)]
        points: usize,
    },
    /// Maximizers and fixed points of the constant problem.
    SolveScalar,
    /// One damped fixed-point run from the configured profile.
    SolveProfile,
    /// Multistart free energy, optimizer set and symmetry verdict.
    FreeEnergy,
    /// Free energy and verdict across a coupling grid.
    PhaseScan {
        #[arg(long, allow_negative_numbers = true)]
        theta_min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        theta_max: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Coupling at which zero stops being the optimal magnetization.
    CriticalTheta,
    /// Glauber chains with trace output.
    Sample {
        #[arg(long)]
        sweeps: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
        /// Comma-separated statistics, e.g. `mag,ham,contrast:alt,moments`.
        #[arg(long)]
        stats: Option<String>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Empirical local-field laws against the predicted limit set.
    WeakLaw,
    /// Exact finite-n free energy by enumeration.
    ExactSmallN,
    /// Runs an embedded experiment; `list` prints the registry.
    Preset { name: String },
}

fn load(global: &Global) -> Result<ExperimentConfig> {
    let path = global
        .config
        .as_ref()
        .context("this subcommand needs --config <file.toml>")?;
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<Option<Report>> {
    let g = &cli.global;
    let report = match cli.command {
        Cmd::Preset { name } => {
            if name == "list" {
                for p in PRESETS {
                    println!("{}", p.name);
                }
                return Ok(None);
            }
            if g.config.is_some() {
                bail!("preset runs use their embedded config; drop --config");
            }
            let preset = presets::find(&name)?;
            let mut cfg = preset.config()?;
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            std::fs::create_dir_all(&g.out)?;
            std::fs::write(g.out.join("config.toml"), cfg.to_toml()?)?;
            preset.run_with(&cfg)?
        }
        Cmd::Tilt { points } => pipelines::tilt(&load(g)?, points)?,
        Cmd::SolveScalar => pipelines::run(Command::SolveScalar, &load(g)?)?,
        Cmd::SolveProfile => pipelines::run(Command::SolveProfile, &load(g)?)?,
        Cmd::FreeEnergy => pipelines::run(Command::FreeEnergy, &load(g)?)?,
        Cmd::PhaseScan {
            theta_min,
            theta_max,
            steps,
        } => {
            let mut cfg = load(g)?;
            if let Some(x) = theta_min {
                cfg.scan.theta_min = x;
            }
            if let Some(x) = theta_max {
                cfg.scan.theta_max = x;
            }
            if let Some(x) = steps {
                cfg.scan.steps = x;
            }
            pipelines::run(Command::PhaseScan, &cfg)?
        }
        Cmd::CriticalTheta => pipelines::run(Command::CriticalTheta, &load(g)?)?,
        Cmd::Sample {
            sweeps,
            burn_in,
            thin,
            stats,
            n,
        } => {
            let mut cfg = load(g)?;
            let s = &mut cfg.sampler;
            if let Some(x) = sweeps {
                s.sweeps = x;
            }
            if let Some(x) = burn_in {
                s.burn_in = x;
            }
            if let Some(x) = thin {
                s.thin = x;
            }
            if let Some(x) = n {
                s.n = x;
            }
            if let Some(x) = stats {
                s.stats = x.split(',').map(|t| t.trim().to_string()).collect();
            }
            if g.seed.is_some() {
                s.seeds.clear();
            }
            cfg.validate()?;
            pipelines::run(Command::Sample, &cfg)?
        }
        Cmd::WeakLaw => pipelines::run(Command::WeakLaw, &load(g)?)?,
        Cmd::ExactSmallN => pipelines::run(Command::ExactSmallN, &load(g)?)?,
    };
    report.write(&g.out)?;
    Ok(Some(report))
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(report)) => {
            for c in &report.checks {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                eprintln!("assertion failure; diagnostic CSV kept in the output directory");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
