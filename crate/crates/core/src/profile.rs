use crate::error::{Error, Result};
use crate::exp_family::{BaseMeasure, ENDPOINT_SNAP};

/// Step function on `[0,1]`: block `b` occupies an interval of length `masses[b]`,
/// blocks laid out left to right.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldProfile {
    masses: Vec<f64>,
    values: Vec<f64>,
}

impl FieldProfile {
    pub fn new(masses: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if masses.is_empty() || masses.len() != values.len() {
            return Err(Error::InvalidKernel(format!(
                "profile has {} masses and {} values",
                masses.len(),
                values.len()
            )));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::InvalidKernel("profile masses must be positive".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidKernel(format!("profile masses sum to {total}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidKernel("profile values must be finite".into()));
        }
        Ok(Self { masses, values })
    }

    pub(crate) fn new_unchecked(masses: Vec<f64>, values: Vec<f64>) -> Self {
        Self { masses, values }
    }

    pub fn constant(t: f64) -> Self {
        Self {
            masses: vec![1.0],
            values: vec![t],
        }
    }

    /// Equal-mass blocks.
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let k = values.len().max(1);
        Self::new(vec![1.0 / k as f64; values.len()], values)
    }

    /// Same partition as `masses`, every block equal to `t`.
    pub fn constant_on(masses: &[f64], t: f64) -> Self {
        Self {
            masses: masses.to_vec(),
            values: vec![t; masses.len()],
        }
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn k(&self) -> usize {
        self.masses.len()
    }

    /// `int f`.
    pub fn integral(&self) -> f64 {
        self.masses.iter().zip(&self.values).map(|(m, v)| m * v).sum()
    }

    /// `max f - min f`.
    pub fn spread(&self) -> f64 {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }

    pub fn is_constant(&self, tol: f64) -> bool {
        self.spread() <= tol
    }

    /// Block containing `u`, with blocks closed on the left.
    pub fn block_of(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (b, m) in self.masses.iter().enumerate() {
            acc += m;
            if u < acc {
                return b;
            }
        }
        self.masses.len() - 1
    }

    pub fn value_at(&self, u: f64) -> f64 {
        self.values[self.block_of(u)]
    }

    /// Sup-norm distance on a shared partition; `None` when partitions differ.
    pub fn sup_distance(&self, other: &FieldProfile) -> Option<f64> {
        if self.masses.len() != other.masses.len()
            || self
                .masses
                .iter()
                .zip(&other.masses)
                .any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return None;
        }
        Some(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }

    /// All values in the closed support hull of `mu`.
    pub fn within_hull(&self, mu: &BaseMeasure) -> bool {
        self.values.iter().all(|v| {
            *v >= mu.support_min() - ENDPOINT_SNAP && *v <= mu.support_max() + ENDPOINT_SNAP
        })
    }
}
