//! Limiting variational problems: the constant problem, step-profile fixed points,
//! free energy, and phase scans.

mod phase;
mod scalar;
mod variational;

pub use phase::{
    critical_theta, uniqueness_field, zero_is_optimal, CriticalOptions, CriticalReport,
    UniquenessReport,
};
pub use scalar::{
    local_maxima, quadratic_case, scalar_fixed_points, scalar_maximizers, scalar_objective,
    FixedPoint, QuadraticCase, QuadraticReport, ScalarOptimum, ScalarOptions, ScalarReport,
};
pub use variational::{
    profile_fixed_point, profile_gradient, profile_objective, replica_symmetry_verdict,
    solve_free_energy, stationarity_residual, FreeEnergyReport, IterationOptions, MultistartSpec,
    Problem, ProfileRun, SymmetryConditions, SymmetryReport, Verdict,
};
