//! Phase-transition scans for the constant problem: the critical coupling at zero
//! field and the field above which the maximizer is unique.

use super::scalar::{local_maxima, scalar_maximizers, scalar_objective, ScalarOptions, ScalarReport};
use crate::error::{Error, Result};
use crate::exp_family::BaseMeasure;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalOptions {
    pub bracket: (f64, f64),
    pub tol: f64,
    /// Points in the post-hoc monotonicity scan.
    pub scan: usize,
}

impl Default for CriticalOptions {
    fn default() -> Self {
        Self {
            bracket: (0.0, 8.0),
            tol: 1e-8,
            scan: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalReport {
    pub theta_c: f64,
    /// Final bisection bracket: zero is optimal at `lo`, not at `hi`.
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
    /// `(theta, zero is a global maximizer)` for the monotonicity scan.
    pub scan: Vec<(f64, bool)>,
}

const GRID: usize = 4096;

/// Whether `x = 0` globally maximizes `H_{theta,0}`.
///
/// Near a continuous transition the competing maxima differ from `H(0)` only at
/// second order in `theta - theta_c`, so the curvature at zero decides for `v = 2`
/// and the grid search settles everything else.
pub fn zero_is_optimal(mu: &BaseMeasure, theta: f64, v: usize) -> Result<bool> {
    if v == 2 && 2.0 * theta * mu.tilt_var(0.0) > 1.0 {
        return Ok(false);
    }
    if v == 1 && theta != 0.0 {
        return Ok(false);
    }
    let h0 = scalar_objective(mu, theta, 0.0, v, 0.0)?;
    let beats = local_maxima(mu, theta, 0.0, v, GRID)?
        .iter()
        .any(|m| m.x.abs() > 1e-7 && m.value > h0 + 1e-12);
    Ok(!beats)
}

/// Bisection for the coupling at which zero stops being the optimal magnetization.
pub fn critical_theta(mu: &BaseMeasure, v: usize, opts: &CriticalOptions) -> Result<CriticalReport> {
    if mu.tilt_mean(0.0).abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "mean of the base measure is {}, not zero",
            mu.tilt_mean(0.0)
        )));
    }
    if !(opts.tol > 0.0) || !(opts.bracket.0 < opts.bracket.1) {
        return Err(Error::Precondition("need tol > 0 and an increasing bracket".into()));
    }
    let (mut lo, mut hi) = opts.bracket;
    if !zero_is_optimal(mu, lo, v)? {
        return Err(Error::Diagnostic(format!(
            "zero is not optimal at the lower bracket end {lo}"
        )));
    }
    let mut doublings = 0;
    while zero_is_optimal(mu, hi, v)? {
        hi = lo + 2.0 * (hi - lo);
        doublings += 1;
        if doublings > 40 {
            return Err(Error::Diagnostic("no transition found below theta = 1e12".into()));
        }
    }
    let start = lo;
    let end = hi;
    let mut iterations = 0;
    while hi - lo > opts.tol {
        let mid = 0.5 * (lo + hi);
        if zero_is_optimal(mu, mid, v)? {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let n = opts.scan.max(2);
    let mut scan = Vec::with_capacity(n);
    for i in 0..n {
        let t = start + (end - start) * i as f64 / (n - 1) as f64;
        scan.push((t, zero_is_optimal(mu, t, v)?));
    }
    if scan.windows(2).any(|w| !w[0].1 && w[1].1) {
        return Err(Error::Diagnostic(
            "optimality of zero is not monotone in theta on the bracket".into(),
        ));
    }
    Ok(CriticalReport {
        theta_c: 0.5 * (lo + hi),
        lo,
        hi,
        iterations,
        scan,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    /// Smallest grid field from which every larger grid field has one maximizer.
    pub b0: Option<f64>,
    /// `(B, maximizers)` in ascending `B`.
    pub table: Vec<(f64, ScalarReport)>,
}

/// Scans `fields` for the threshold above which the constant problem has a unique maximizer.
pub fn uniqueness_field(mu: &BaseMeasure, theta: f64, v: usize, fields: &[f64]) -> Result<UniquenessReport> {
    if mu.support_min() < -1.0 || mu.support_max() > 1.0 {
        return Err(Error::Precondition("base measure must live on [-1, 1]".into()));
    }
    let mut grid = fields.to_vec();
    grid.sort_by(f64::total_cmp);
    let opts = ScalarOptions::default();
    let table = grid
        .iter()
        .map(|&b| Ok((b, scalar_maximizers(mu, theta, b, v, &opts)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut b0 = None;
    for (b, rep) in table.iter().rev() {
        if rep.len() == 1 {
            b0 = Some(*b);
        } else {
            break;
        }
    }
    Ok(UniquenessReport { b0, table })
}
