//! The one-dimensional problem `sup_x theta x^v + B x - gamma(beta(x))`.

use crate::error::{Error, Result};
use crate::exp_family::{BaseMeasure, ExtendedReal};

/// Grid and tolerance settings for the scalar maximizer search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarOptions {
    pub grid: usize,
    /// Points within this much of the global maximum value are maximizers.
    pub tol_value: f64,
    /// Maximizers closer than this are merged.
    pub tol_x: f64,
    /// More maximizers than this is reported as a diagnostic error.
    pub cap: usize,
}

impl Default for ScalarOptions {
    fn default() -> Self {
        Self {
            grid: 4096,
            tol_value: 1e-9,
            tol_x: 1e-7,
            cap: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarOptimum {
    pub x: f64,
    pub value: f64,
    /// `|x - alpha'(theta v x^(v-1) + B)|`; zero for boundary points, which are
    /// checked one-sidedly instead.
    pub residual: f64,
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarReport {
    /// Sorted by value, best first.
    pub optimizers: Vec<ScalarOptimum>,
}

impl ScalarReport {
    pub fn points(&self) -> Vec<f64> {
        self.optimizers.iter().map(|o| o.x).collect()
    }

    pub fn best_value(&self) -> f64 {
        self.optimizers[0].value
    }

    pub fn len(&self) -> usize {
        self.optimizers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.optimizers.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub x: f64,
    /// Derivative of `x -> alpha'(theta v x^(v-1) + B)` at the root.
    pub map_slope: f64,
    pub stable: bool,
}

/// `H(x) = theta x^v + B x - gamma(beta(x))`.
pub fn scalar_objective(mu: &BaseMeasure, theta: f64, field: f64, v: usize, x: f64) -> Result<f64> {
    let rate = mu.rate_at_mean(x)?;
    Ok(theta * x.powi(v as i32) + field * x - rate)
}

/// `H'(x) = theta v x^(v-1) + B - beta(x)`, infinite at the endpoints.
fn objective_slope(mu: &BaseMeasure, theta: f64, field: f64, v: usize, x: f64) -> f64 {
    let drive = theta * v as f64 * x.powi(v as i32 - 1) + field;
    match mu.inverse_mean(x).expect("inside hull") {
        ExtendedReal::Finite(b) => drive - b,
        ExtendedReal::PosInf => f64::NEG_INFINITY,
        ExtendedReal::NegInf => f64::INFINITY,
    }
}

fn grid(mu: &BaseMeasure, n: usize) -> Vec<f64> {
    let (lo, hi) = (mu.support_min(), mu.support_max());
    let n = n.max(3);
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Every grid-local maximum of `H`, refined to a root of `H'` where one is bracketed.
pub fn local_maxima(
    mu: &BaseMeasure,
    theta: f64,
    field: f64,
    v: usize,
    grid_size: usize,
) -> Result<Vec<ScalarOptimum>> {
    let xs = grid(mu, grid_size);
    let hs = xs
        .iter()
        .map(|&x| scalar_objective(mu, theta, field, v, x))
        .collect::<Result<Vec<_>>>()?;
    let n = xs.len();
    let mut out = Vec::new();
    for i in 0..n {
        let left = if i > 0 { hs[i - 1] } else { f64::NEG_INFINITY };
        let right = if i + 1 < n { hs[i + 1] } else { f64::NEG_INFINITY };
        if hs[i] < left || hs[i] < right {
            continue;
        }
        let a = xs[i.saturating_sub(1)];
        let b = xs[(i + 1).min(n - 1)];
        if let Some(root) = bracket_root(mu, theta, field, v, a, b) {
            let value = scalar_objective(mu, theta, field, v, root)?;
            if value >= hs[i] - 1e-12 * (1.0 + hs[i].abs()) {
                out.push(interior_optimum(mu, theta, field, v, root, value));
                continue;
            }
        }
        // no sign change of H' bracketed: keep the grid point (boundary case)
        let boundary = i == 0 || i == n - 1;
        out.push(ScalarOptimum {
            x: xs[i],
            value: hs[i],
            residual: if boundary { 0.0 } else { fixed_point_residual(mu, theta, field, v, xs[i]) },
            boundary,
        });
    }
    Ok(out)
}

fn interior_optimum(
    mu: &BaseMeasure,
    theta: f64,
    field: f64,
    v: usize,
    x: f64,
    value: f64,
) -> ScalarOptimum {
    let at_edge = mu.inverse_mean(x).map(|b| !b.is_finite()).unwrap_or(false);
    ScalarOptimum {
        x,
        value,
        residual: if at_edge { 0.0 } else { fixed_point_residual(mu, theta, field, v, x) },
        boundary: at_edge,
    }
}

fn fixed_point_residual(mu: &BaseMeasure, theta: f64, field: f64, v: usize, x: f64) -> f64 {
    (x - mu.tilt_mean(theta * v as f64 * x.powi(v as i32 - 1) + field)).abs()
}

/// Bisection for `H' = 0` on `[a, b]` when `H'(a) > 0 > H'(b)`.
fn bracket_root(mu: &BaseMeasure, theta: f64, field: f64, v: usize, a: f64, b: f64) -> Option<f64> {
    let (mut lo, mut hi) = (a, b);
    let dlo = objective_slope(mu, theta, field, v, lo);
    let dhi = objective_slope(mu, theta, field, v, hi);
    if dlo == 0.0 {
        return Some(lo);
    }
    if dhi == 0.0 {
        return Some(hi);
    }
    if !(dlo > 0.0 && dhi < 0.0) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let d = objective_slope(mu, theta, field, v, mid);
        if d == 0.0 {
            return Some(mid);
        }
        if d > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// The maximizer set of `H`: all refined local maxima within `tol_value` of the best,
/// merged at `tol_x`.
pub fn scalar_maximizers(
    mu: &BaseMeasure,
    theta: f64,
    field: f64,
    v: usize,
    opts: &ScalarOptions,
) -> Result<ScalarReport> {
    let mut cands = local_maxima(mu, theta, field, v, opts.grid)?;
    let best = cands
        .iter()
        .map(|c| c.value)
        .fold(f64::NEG_INFINITY, f64::max);
    cands.retain(|c| c.value >= best - opts.tol_value);
    cands.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.x.total_cmp(&b.x)));
    let mut kept: Vec<ScalarOptimum> = Vec::new();
    for c in cands {
        if kept.iter().all(|k| (k.x - c.x).abs() > opts.tol_x) {
            kept.push(c);
        }
    }
    if kept.len() > opts.cap {
        return Err(Error::Diagnostic(format!(
            "{} maximizers exceed the cap of {}",
            kept.len(),
            opts.cap
        )));
    }
    Ok(ScalarReport { optimizers: kept })
}

/// All roots of `x - alpha'(theta v x^(v-1) + B)` on the support hull.
pub fn scalar_fixed_points(mu: &BaseMeasure, theta: f64, field: f64, v: usize) -> Vec<FixedPoint> {
    let xs = grid(mu, 4096);
    let g = |x: f64| x - mu.tilt_mean(theta * v as f64 * x.powi(v as i32 - 1) + field);
    let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    let mut roots = Vec::new();
    for i in 0..xs.len() {
        if gs[i] == 0.0 {
            roots.push(xs[i]);
            continue;
        }
        if i + 1 < xs.len() && gs[i + 1] != 0.0 && (gs[i] < 0.0) != (gs[i + 1] < 0.0) {
            let (mut lo, mut hi) = (xs[i], xs[i + 1]);
            let neg_at_lo = gs[i] < 0.0;
            while hi - lo > 1e-15 * (1.0 + lo.abs()) {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let gm = g(mid);
                if gm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (gm < 0.0) == neg_at_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
    }
    roots
        .into_iter()
        .map(|x| {
            let drive = theta * v as f64 * x.powi(v as i32 - 1) + field;
            let dpow = if v >= 2 {
                (v * (v - 1)) as f64 * x.powi(v as i32 - 2)
            } else {
                0.0
            };
            let slope = mu.tilt_var(drive) * theta * dpow;
            FixedPoint {
                x,
                map_slope: slope,
                stable: slope.abs() < 1.0,
            }
        })
        .collect()
}

/// Which branch of the quadratic symmetric-base trichotomy applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadraticCase {
    /// `B = 0`, `2 theta <= 1/alpha''(0)`: unique maximizer at zero.
    Subcritical,
    /// `B != 0`: unique maximizer with the sign of `B`.
    Field,
    /// `B = 0`, `2 theta > 1/alpha''(0)`: two maximizers `+-t`.
    Supercritical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticReport {
    pub case: QuadraticCase,
    /// The non-negative (or sign-of-B) maximizer.
    pub t: f64,
    /// `1 / (2 alpha''(0))`.
    pub threshold_theta: f64,
    /// Grid verdict on `alpha''` decreasing in `|theta|`; a warning flag when false.
    pub variance_monotone: bool,
    /// Whether the numerical maximizer set matches the predicted case.
    pub consistent: bool,
    pub maximizers: ScalarReport,
}

/// Quadratic interaction (`v = 2`) with a base measure symmetric about zero.
pub fn quadratic_case(mu: &BaseMeasure, theta: f64, field: f64) -> Result<QuadraticReport> {
    if !mu.is_symmetric_about_zero() {
        return Err(Error::Precondition(
            "base measure must be symmetric about zero".into(),
        ));
    }
    if theta < 0.0 {
        return Err(Error::Precondition(format!("theta={theta} must be non-negative")));
    }
    let variance_monotone = mu.variance_monotone_on_grid(512, 20.0);
    let threshold_theta = 0.5 / mu.tilt_var(0.0);
    let maximizers = scalar_maximizers(mu, theta, field, 2, &ScalarOptions::default())?;
    let pts = maximizers.points();
    let (case, t, consistent) = if field != 0.0 {
        let ok = pts.len() == 1 && pts[0].signum() == field.signum();
        let t = pts.iter().copied().find(|x| x.signum() == field.signum()).unwrap_or(pts[0]);
        (QuadraticCase::Field, t, ok)
    } else if theta <= threshold_theta {
        let ok = pts.len() == 1 && pts[0].abs() <= 1e-7;
        (QuadraticCase::Subcritical, 0.0, ok)
    } else {
        let t = pts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ok = pts.len() == 2 && (pts[0] + pts[1]).abs() <= 1e-7 && t > 0.0;
        (QuadraticCase::Supercritical, t, ok)
    };
    Ok(QuadraticReport {
        case,
        t,
        threshold_theta,
        variance_monotone,
        consistent,
        maximizers,
    })
}
