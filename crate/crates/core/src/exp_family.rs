//! Finitely supported base measures and their exponential tilts.
//!
//! A [`BaseMeasure`] is an atomic probability measure on the real line. All
//! tilt quantities are computed exactly over the atoms:
//!
//! * `log_mgf` is the log moment generating function `alpha(theta)`,
//! * `tilt_mean` / `tilt_var` are its first two derivatives,
//! * `inverse_mean` is the inverse of `tilt_mean` extended by `+-inf` at the
//!   support endpoints,
//! * `rate` / `rate_at_mean` give the KL divergence of a tilt from the base.

use crate::error::{Error, Result};

/// Values this close to a support endpoint are treated as the endpoint itself.
pub const ENDPOINT_SNAP: f64 = 1e-12;

const ROOT_TOL: f64 = 1e-14;
const MAX_ROOT_ITERS: usize = 500;

/// A real number or a signed infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    PosInf,
    NegInf,
}

impl ExtendedReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            ExtendedReal::Finite(v) => v,
            ExtendedReal::PosInf => f64::INFINITY,
            ExtendedReal::NegInf => f64::NEG_INFINITY,
        }
    }
}

/// Atomic probability measure with strictly increasing points and positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseMeasure {
    points: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

/// Witness that a measure is an exponential tilt of a point-symmetric measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricTilt {
    /// Centre of symmetry of the support.
    pub center: f64,
    /// Slope `B` of the log-weight difference `log w(x) - log w(mirror(x)) = B (x - mirror(x))`.
    pub slope: f64,
}

impl BaseMeasure {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.len() < 2 {
            return Err(Error::InvalidMeasure(
                "at least two atoms are required".into(),
            ));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidMeasure("atom points must be finite".into()));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidMeasure(
                "atom points must be strictly increasing".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidMeasure(
                "atom weights must be strictly positive".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            points,
            weights,
            log_weights,
        })
    }

    /// Normalizes positive weights before validating.
    pub fn from_unnormalized(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidMeasure("weights must have positive finite sum".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Self::new(points, weights)
    }

    /// Builds a measure from log-weights, normalizing in log space.
    pub fn from_log_weights(points: Vec<f64>, log_weights: &[f64]) -> Result<Self> {
        let lse = log_sum_exp(log_weights);
        let weights = log_weights.iter().map(|l| (l - lse).exp()).collect();
        let mut m = Self::new(points, weights)?;
        m.log_weights = log_weights.iter().map(|l| l - lse).collect();
        Ok(m)
    }

    /// Fair coin on `{-1, +1}`.
    pub fn ising_pm1() -> Self {
        Self::new(vec![-1.0, 1.0], vec![0.5, 0.5]).expect("valid preset")
    }

    /// Coin on `{-1, +1}` with `mu(1) = e^h / (e^h + e^-h)`.
    pub fn ising_field(h: f64) -> Self {
        Self::from_log_weights(vec![-1.0, 1.0], &[-h, h]).expect("valid preset")
    }

    /// Bernoulli(p) on `{0, 1}`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidMeasure(format!("bernoulli p={p} must lie in (0,1)")));
        }
        Self::new(vec![0.0, 1.0], vec![1.0 - p, p])
    }

    /// `{-1, 0, 1}` with mass `w` at zero and `(1-w)/2` at each sign.
    pub fn three_point(w: f64) -> Result<Self> {
        if !(w > 0.0 && w < 1.0) {
            return Err(Error::InvalidMeasure(format!("three_point w={w} must lie in (0,1)")));
        }
        let s = 0.5 * (1.0 - w);
        Self::new(vec![-1.0, 0.0, 1.0], vec![s, w, s])
    }

    /// Gauss-Legendre discretization of a density on `[a, b]`.
    pub fn quadrature(density: Density, a: f64, b: f64, nodes: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidMeasure(format!("bad quadrature interval [{a}, {b}]")));
        }
        if nodes < 2 {
            return Err(Error::InvalidMeasure("quadrature needs at least two nodes".into()));
        }
        let (xs, ws) = gauss_legendre(nodes);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut points = Vec::with_capacity(nodes);
        let mut weights = Vec::with_capacity(nodes);
        for (x, w) in xs.iter().zip(&ws) {
            let p = mid + half * x;
            let d = density.eval(p, a, b);
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::InvalidMeasure(format!(
                    "density {density:?} is not positive at node {p}"
                )));
            }
            points.push(p);
            weights.push(w * d);
        }
        Self::from_unnormalized(points, weights)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn support_min(&self) -> f64 {
        self.points[0]
    }

    pub fn support_max(&self) -> f64 {
        *self.points.last().expect("non-empty")
    }

    /// Largest absolute support value.
    pub fn support_radius(&self) -> f64 {
        self.support_min().abs().max(self.support_max().abs())
    }

    fn tilted_log_weights(&self, theta: f64) -> Vec<f64> {
        self.points
            .iter()
            .zip(&self.log_weights)
            .map(|(x, lw)| lw + theta * x)
            .collect()
    }

    /// Normalized tilted probabilities and the log normalizer.
    fn tilted_probs(&self, theta: f64) -> (Vec<f64>, f64) {
        let lw = self.tilted_log_weights(theta);
        let lse = log_sum_exp(&lw);
        (lw.iter().map(|l| (l - lse).exp()).collect(), lse)
    }

    /// `alpha(theta) = log E_mu exp(theta X)`.
    pub fn log_mgf(&self, theta: f64) -> f64 {
        log_sum_exp(&self.tilted_log_weights(theta))
    }

    /// `alpha'(theta)`, the mean of the tilted measure.
    pub fn tilt_mean(&self, theta: f64) -> f64 {
        let (p, _) = self.tilted_probs(theta);
        let m: f64 = p.iter().zip(&self.points).map(|(p, x)| p * x).sum();
        m.clamp(self.support_min(), self.support_max())
    }

    /// `alpha''(theta)`, the variance of the tilted measure.
    pub fn tilt_var(&self, theta: f64) -> f64 {
        let (p, _) = self.tilted_probs(theta);
        let m: f64 = p.iter().zip(&self.points).map(|(p, x)| p * x).sum();
        p.iter()
            .zip(&self.points)
            .map(|(p, x)| p * (x - m) * (x - m))
            .sum()
    }

    /// The theta-tilt: same points, weights proportional to `w_j e^{theta x_j}`.
    pub fn tilted_measure(&self, theta: f64) -> BaseMeasure {
        let lw = self.tilted_log_weights(theta);
        let lse = log_sum_exp(&lw);
        let log_weights: Vec<f64> = lw.iter().map(|l| l - lse).collect();
        BaseMeasure {
            points: self.points.clone(),
            weights: log_weights.iter().map(|l| l.exp()).collect(),
            log_weights,
        }
    }

    fn check_hull(&self, x: f64) -> Result<()> {
        let (lo, hi) = (self.support_min(), self.support_max());
        if x.is_nan() || x < lo - ENDPOINT_SNAP || x > hi + ENDPOINT_SNAP {
            return Err(Error::Domain {
                value: x,
                min: lo,
                max: hi,
            });
        }
        Ok(())
    }

    /// Classifies `x` as the lower endpoint, upper endpoint or an interior mean.
    fn snap(&self, x: f64) -> Result<Snapped> {
        self.check_hull(x)?;
        if (x - self.support_max()).abs() <= ENDPOINT_SNAP {
            Ok(Snapped::Upper)
        } else if (x - self.support_min()).abs() <= ENDPOINT_SNAP {
            Ok(Snapped::Lower)
        } else {
            Ok(Snapped::Interior(x))
        }
    }

    /// `beta(x)`: the natural parameter whose tilt has mean `x`.
    pub fn inverse_mean(&self, x: f64) -> Result<ExtendedReal> {
        match self.snap(x)? {
            Snapped::Upper => Ok(ExtendedReal::PosInf),
            Snapped::Lower => Ok(ExtendedReal::NegInf),
            Snapped::Interior(x) => Ok(ExtendedReal::Finite(self.solve_mean(x))),
        }
    }

    /// Safeguarded Newton on `alpha'(theta) = x` for interior `x`.
    fn solve_mean(&self, x: f64) -> f64 {
        // g(theta) = E_theta[X - x] is strictly increasing
        let g = |theta: f64| -> (f64, f64) {
            let (p, _) = self.tilted_probs(theta);
            let m: f64 = p.iter().zip(&self.points).map(|(p, y)| p * y).sum();
            let gv: f64 = p.iter().zip(&self.points).map(|(p, y)| p * (y - x)).sum();
            let var: f64 = p
                .iter()
                .zip(&self.points)
                .map(|(p, y)| p * (y - m) * (y - m))
                .sum();
            (gv, var)
        };
        let mut lo = -50.0;
        let mut hi = 50.0;
        for _ in 0..64 {
            if g(lo).0 <= 0.0 {
                break;
            }
            lo *= 2.0;
        }
        for _ in 0..64 {
            if g(hi).0 >= 0.0 {
                break;
            }
            hi *= 2.0;
        }
        let scale = 1.0 + x.abs();
        let mut theta = if lo < 0.0 && hi > 0.0 { 0.0 } else { 0.5 * (lo + hi) };
        for _ in 0..MAX_ROOT_ITERS {
            let (gv, var) = g(theta);
            if gv.abs() <= ROOT_TOL * scale {
                return theta;
            }
            if gv > 0.0 {
                hi = theta;
            } else {
                lo = theta;
            }
            if hi - lo <= 4.0 * f64::EPSILON * (1.0 + theta.abs()) {
                return theta;
            }
            let newton = theta - gv / var;
            theta = if var > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        theta
    }

    /// `gamma(theta) = theta alpha'(theta) - alpha(theta) = KL(mu_theta || mu)`.
    pub fn rate(&self, theta: f64) -> f64 {
        let (p, lse) = self.tilted_probs(theta);
        let mean: f64 = p.iter().zip(&self.points).map(|(p, x)| p * x).sum();
        (theta * mean - lse).max(0.0)
    }

    /// `gamma(beta(x))` with the endpoint convention `-log mu({endpoint})`.
    pub fn rate_at_mean(&self, x: f64) -> Result<f64> {
        match self.snap(x)? {
            Snapped::Upper => Ok(-*self.log_weights.last().expect("non-empty")),
            Snapped::Lower => Ok(-self.log_weights[0]),
            Snapped::Interior(x) => Ok(self.rate(self.solve_mean(x))),
        }
    }

    /// Grid check of stochastic non-negativity: `gamma(beta(t)) <= gamma(beta(-t))` for `t > 0`.
    pub fn is_stochastically_nonneg(&self, grid_size: usize) -> bool {
        let (lo, hi) = (self.support_min(), self.support_max());
        if lo >= 0.0 {
            return true;
        }
        // -t attainable but t not
        if -lo > hi + ENDPOINT_SNAP {
            return false;
        }
        let grid_size = grid_size.max(16);
        let top = (-lo).min(hi);
        (1..=grid_size).all(|k| {
            let t = top * k as f64 / grid_size as f64;
            let pos = self.rate_at_mean(t.min(hi)).expect("inside hull");
            let neg = self.rate_at_mean((-t).max(lo)).expect("inside hull");
            pos <= neg + 1e-10
        })
    }

    /// Detects a point-symmetric support whose log-weights differ by a linear function.
    ///
    /// Returns `(true, Some(witness))` when the slope is non-negative; a
    /// negative slope is still reported so callers can see the offending tilt.
    pub fn nonneg_tilt_of_symmetric(&self) -> (bool, Option<SymmetricTilt>) {
        let n = self.len();
        let center = 0.5 * (self.support_min() + self.support_max());
        let scale = 1.0 + self.support_radius();
        for j in 0..n / 2 {
            let mirror = self.points[n - 1 - j];
            if (self.points[j] + mirror - 2.0 * center).abs() > 1e-12 * scale {
                return (false, None);
            }
        }
        if n % 2 == 1 && (self.points[n / 2] - center).abs() > 1e-12 * scale {
            return (false, None);
        }
        if n == 1 {
            return (true, Some(SymmetricTilt { center, slope: 0.0 }));
        }
        let slopes: Vec<f64> = (0..n / 2)
            .map(|j| {
                let k = n - 1 - j;
                (self.log_weights[k] - self.log_weights[j]) / (self.points[k] - self.points[j])
            })
            .collect();
        let slope = slopes[0];
        if slopes
            .iter()
            .any(|s| (s - slope).abs() > 1e-9 * (1.0 + slope.abs()))
        {
            return (false, None);
        }
        let witness = SymmetricTilt { center, slope };
        (slope >= -1e-12, Some(witness))
    }

    /// True when the atoms mirror about zero with equal weights.
    pub fn is_symmetric_about_zero(&self) -> bool {
        let n = self.len();
        (0..n).all(|j| {
            let k = n - 1 - j;
            (self.points[j] + self.points[k]).abs() <= 1e-12 * (1.0 + self.support_radius())
                && (self.weights[j] - self.weights[k]).abs() <= 1e-12
        })
    }

    /// Grid check that `alpha''` is non-increasing in `|theta|`, i.e.
    /// `alpha''(x) <= alpha''(y)` whenever `|x| >= |y|`.
    ///
    /// This is a numerical verdict on `[0, theta_max]`, not a certificate.
    pub fn variance_monotone_on_grid(&self, grid_size: usize, theta_max: f64) -> bool {
        let grid_size = grid_size.max(2);
        let mut prev_min = f64::INFINITY;
        for k in 0..=grid_size {
            let t = theta_max * k as f64 / grid_size as f64;
            let a = self.tilt_var(t);
            let b = self.tilt_var(-t);
            if a.max(b) > prev_min + 1e-13 {
                return false;
            }
            prev_min = prev_min.min(a.min(b));
        }
        true
    }
}

enum Snapped {
    Lower,
    Upper,
    Interior(f64),
}

/// Named densities accepted by [`BaseMeasure::quadrature`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Density {
    Uniform,
    Semicircle,
    Tent,
    Gaussian,
}

impl Density {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "uniform" => Ok(Density::Uniform),
            "semicircle" => Ok(Density::Semicircle),
            "tent" => Ok(Density::Tent),
            "gaussian" => Ok(Density::Gaussian),
            other => Err(Error::InvalidMeasure(format!("unknown density {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Density::Uniform => "uniform",
            Density::Semicircle => "semicircle",
            Density::Tent => "tent",
            Density::Gaussian => "gaussian",
        }
    }

    fn eval(self, x: f64, a: f64, b: f64) -> f64 {
        match self {
            Density::Uniform => 1.0,
            Density::Semicircle => ((x - a) * (b - x)).max(0.0).sqrt(),
            Density::Tent => 1.0 - (2.0 * (x - 0.5 * (a + b)) / (b - a)).abs(),
            Density::Gaussian => (-0.5 * x * x).exp(),
        }
    }
}

/// Numerically stable `log(sum(exp(x)))`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
