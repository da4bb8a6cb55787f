//! Experiment configuration, presets and table output for the `multigibbs` binary.

pub mod config;
pub mod output;
pub mod pipelines;
pub mod presets;

pub use config::ExperimentConfig;
pub use pipelines::{run, Check, Command, Report};
