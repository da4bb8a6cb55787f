//! Mean-field analysis and Glauber sampling for multilinear Gibbs measures on block
//! couplings.

pub mod empirics;
pub mod error;
pub mod exp_family;
pub mod meanfield;
pub mod motif;
pub mod profile;
pub mod sampler;

pub use error::{Error, Result};
pub use exp_family::{BaseMeasure, Density, ExtendedReal};
pub use motif::{CouplingMatrix, MotifGraph, StepKernel};
pub use profile::FieldProfile;
