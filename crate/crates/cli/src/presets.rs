//! Embedded experiment configs and the pipelines each one runs.

use anyhow::{bail, Result};

use crate::config::ExperimentConfig;
use crate::pipelines::{run, Command, Report};

pub struct Preset {
    pub name: &'static str,
    pub toml: &'static str,
    pub commands: &'static [Command],
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "tripartite-counterexample",
        toml: include_str!("../presets/tripartite-counterexample.toml"),
        commands: &[Command::FreeEnergy],
    },
    Preset {
        name: "bipartite-negative-theta",
        toml: include_str!("../presets/bipartite-negative-theta.toml"),
        commands: &[Command::FreeEnergy],
    },
    Preset {
        name: "curie-weiss-phase",
        toml: include_str!("../presets/curie-weiss-phase.toml"),
        commands: &[Command::PhaseScan, Command::Sample],
    },
    Preset {
        name: "weak-law-scan",
        toml: include_str!("../presets/weak-law-scan.toml"),
        commands: &[Command::WeakLaw],
    },
    Preset {
        name: "free-energy-convergence",
        toml: include_str!("../presets/free-energy-convergence.toml"),
        commands: &[Command::ExactSmallN],
    },
    Preset {
        name: "theta-c",
        toml: include_str!("../presets/theta-c.toml"),
        commands: &[Command::CriticalTheta],
    },
];

pub fn find(name: &str) -> Result<&'static Preset> {
    match PRESETS.iter().find(|p| p.name == name) {
        Some(p) => Ok(p),
        None => {
            let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
            bail!("unknown preset '{name}'; available: {}", names.join(", "))
        }
    }
}

impl Preset {
    pub fn config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(self.toml)
    }

    pub fn run_with(&self, cfg: &ExperimentConfig) -> Result<Report> {
        let mut report = Report::default();
        for &cmd in self.commands {
            report.merge(run(cmd, cfg)?);
        }
        Ok(report)
    }
}

/// Runs a preset with its embedded seed, or `seed` when given.
pub fn run_preset(name: &str, seed: Option<u64>) -> Result<Report> {
    let preset = find(name)?;
    let mut cfg = preset.config()?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    preset.run_with(&cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_and_round_trips() {
        for p in PRESETS {
            let cfg = p.config().unwrap();
            assert_eq!(cfg.name, p.name);
            let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(cfg, again, "{}", p.name);
        }
        assert!(find("nope").is_err());
    }
}
