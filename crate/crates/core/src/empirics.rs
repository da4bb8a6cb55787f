//! Empirical measures on `[0,1] x R`, the limit laws they are compared with, and a
//! matching-based surrogate for the bounded-Lipschitz distance.
//!
//! The ground metric on `[0,1] x R` is the l1 sum `|du| + |dy|`, truncated at 2.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exp_family::{BaseMeasure, ExtendedReal};
use crate::motif::{MotifGraph, StepKernel};
use crate::profile::FieldProfile;

/// Equal-weight point cloud `(u_i, y_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure2D {
    points: Vec<(f64, f64)>,
}

impl EmpiricalMeasure2D {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("empirical measure has no points".into()));
        }
        if points.iter().any(|(u, y)| !u.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidMeasure("empirical points must be finite".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Mean of `|y|^p`.
    pub fn y_moment(&self, p: f64) -> f64 {
        self.points.iter().map(|(_, y)| y.abs().powf(p)).sum::<f64>() / self.len() as f64
    }
}

/// `(1/n) sum_i delta_(i/n, values_i)`.
pub fn empirical_of_config(values: &[f64]) -> Result<EmpiricalMeasure2D> {
    let n = values.len() as f64;
    EmpiricalMeasure2D::new(
        values
            .iter()
            .enumerate()
            .map(|(i, &y)| ((i + 1) as f64 / n, y))
            .collect(),
    )
}

/// Same construction applied to local fields.
pub fn empirical_of_fields(m: &[f64]) -> Result<EmpiricalMeasure2D> {
    empirical_of_config(m)
}

/// A law on `[0,1] x R` with uniform first marginal.
#[derive(Debug, Clone, PartialEq)]
pub enum LimitLaw {
    /// Given `U = u`, `V` has mean `f(u)` within the exponential family of `mu`.
    ProductTilt { profile: FieldProfile, mu: BaseMeasure },
    /// `V = g(U)`.
    Degenerate { profile: FieldProfile },
}

impl LimitLaw {
    pub fn profile(&self) -> &FieldProfile {
        match self {
            LimitLaw::ProductTilt { profile, .. } | LimitLaw::Degenerate { profile } => profile,
        }
    }
}

/// `n` stratified draws: `u_i = (i - 0.5)/n`.
pub fn sample_limit(law: &LimitLaw, n: usize, seed: u64) -> Result<EmpiricalMeasure2D> {
    if n == 0 {
        return Err(Error::Empty("cannot sample zero points".into()));
    }
    let us = (1..=n).map(|i| (i as f64 - 0.5) / n as f64);
    match law {
        LimitLaw::Degenerate { profile } => {
            EmpiricalMeasure2D::new(us.map(|u| (u, profile.value_at(u))).collect())
        }
        LimitLaw::ProductTilt { profile, mu } => {
            let tilted = profile
                .values()
                .iter()
                .map(|&f| {
                    Ok(match mu.inverse_mean(f)? {
                        ExtendedReal::Finite(b) => Some(mu.tilted_measure(b)),
                        _ => None,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = us
                .map(|u| {
                    let b = profile.block_of(u);
                    let y = match &tilted[b] {
                        Some(t) => draw_atom(t, &mut rng),
                        // Endpoint means are only attained by the endpoint atom.
                        None => profile.values()[b].clamp(mu.support_min(), mu.support_max()),
                    };
                    (u, y)
                })
                .collect();
            EmpiricalMeasure2D::new(pts)
        }
    }
}

fn draw_atom(mu: &BaseMeasure, rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (x, w) in mu.points().iter().zip(mu.weights()) {
        acc += w;
        if u < acc {
            return *x;
        }
    }
    mu.support_max()
}

/// Limit objects attached to an optimizer set.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSets {
    /// `Xi(f)` for each optimizer.
    pub xi: Vec<LimitLaw>,
    /// `Law(U, vartheta_f(U))`: limits of the local-field empirical measure.
    pub b_star: Vec<LimitLaw>,
    /// `Law(U, alpha'(theta vartheta_f(U) + B))`: limits of conditional means.
    pub b_tilde: Vec<LimitLaw>,
    /// Blockwise `sup |alpha'(theta vartheta_f + B) - f|` per optimizer.
    pub consistency: Vec<f64>,
    /// Every consistency error is within 1e-7.
    pub consistent: bool,
}

pub fn build_limit_sets(
    optimizers: &[FieldProfile],
    motif: &MotifGraph,
    kernel: &StepKernel,
    mu: &BaseMeasure,
    theta: f64,
    field: f64,
) -> Result<LimitSets> {
    if optimizers.is_empty() {
        return Err(Error::Empty("no optimizers supplied".into()));
    }
    let mut sets = LimitSets {
        xi: Vec::new(),
        b_star: Vec::new(),
        b_tilde: Vec::new(),
        consistency: Vec::new(),
        consistent: true,
    };
    for f in optimizers {
        let th = kernel.vartheta_profile(motif, f)?;
        let cond: Vec<f64> = th
            .values()
            .iter()
            .map(|t| mu.tilt_mean(theta * t + field))
            .collect();
        let cond = FieldProfile::new_unchecked(th.masses().to_vec(), cond);
        let err = th
            .masses()
            .iter()
            .enumerate()
            .map(|(b, _)| {
                let start: f64 = th.masses()[..b].iter().sum();
                let mid = start + 0.5 * th.masses()[b];
                (cond.values()[b] - f.value_at(mid)).abs()
            })
            .fold(0.0, f64::max);
        sets.consistent &= err <= 1e-7;
        sets.consistency.push(err);
        sets.xi.push(LimitLaw::ProductTilt {
            profile: f.clone(),
            mu: mu.clone(),
        });
        sets.b_star.push(LimitLaw::Degenerate { profile: th });
        sets.b_tilde.push(LimitLaw::Degenerate { profile: cond });
    }
    Ok(sets)
}

/// Exact minimum-cost perfect matching on a square cost matrix (row-major).
///
/// Returns the total cost and `assign[row] = column`.
pub fn min_cost_matching(cost: &[f64], n: usize) -> (f64, Vec<usize>) {
    assert_eq!(cost.len(), n * n, "cost matrix must be n x n");
    if n == 0 {
        return (0.0, Vec::new());
    }
    // Shortest augmenting paths with row/column potentials, 1-based with a sentinel column 0.
    let mut pu = vec![0.0; n + 1];
    let mut pv = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|u| *u = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let base = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = base[j - 1] - pu[i0] - pv[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    pu[owner[j]] += delta;
                    pv[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[owner[j] - 1] = j - 1;
    }
    let total = assign
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum();
    (total, assign)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlOptions {
    pub subsample: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BlOptions {
    fn default() -> Self {
        Self {
            subsample: 512,
            repeats: 4,
            seed: 0,
        }
    }
}

fn ground_cost(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).abs() + (a.1 - b.1).abs()).min(2.0)
}

fn matching_average(p: &[(f64, f64)], q: &[(f64, f64)]) -> f64 {
    let n = p.len();
    let mut cost = Vec::with_capacity(n * n);
    for a in p {
        cost.extend(q.iter().map(|b| ground_cost(*a, *b)));
    }
    min_cost_matching(&cost, n).0 / n as f64
}

/// Truncated-cost optimal matching between equal-size subsamples, averaged over repeats.
///
/// Clouds of equal size are subsampled at the same indices, so identical clouds
/// are at distance zero and the triangle inequality holds for equal-size triples.
pub fn bl_distance(p: &EmpiricalMeasure2D, q: &EmpiricalMeasure2D, opts: &BlOptions) -> f64 {
    let s = opts.subsample.max(1).min(p.len()).min(q.len());
    let full = s == p.len() && s == q.len();
    let repeats = if full { 1 } else { opts.repeats.max(1) };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let picks: Vec<(Vec<usize>, Vec<usize>)> = (0..repeats)
        .map(|_| {
            let ip = if s == p.len() {
                (0..s).collect()
            } else {
                let mut v = sample(&mut rng, p.len(), s).into_vec();
                v.sort_unstable();
                v
            };
            let iq = if q.len() == p.len() {
                ip.clone()
            } else if s == q.len() {
                (0..s).collect()
            } else {
                let mut v = sample(&mut rng, q.len(), s).into_vec();
                v.sort_unstable();
                v
            };
            (ip, iq)
        })
        .collect();
    let total: f64 = picks
        .par_iter()
        .map(|(ip, iq)| {
            let a: Vec<_> = ip.iter().map(|&i| p.points[i]).collect();
            let b: Vec<_> = iq.iter().map(|&i| q.points[i]).collect();
            matching_average(&a, &b)
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / repeats as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetDistance {
    pub distance: f64,
    /// Index of the closest law.
    pub nearest: usize,
    pub per_law: Vec<f64>,
}

/// `min_L bl_distance(P, sample_limit(L, n_ref))`.
pub fn distance_to_set(
    p: &EmpiricalMeasure2D,
    laws: &[LimitLaw],
    n_ref: usize,
    opts: &BlOptions,
) -> Result<SetDistance> {
    if laws.is_empty() {
        return Err(Error::Empty("limit set is empty".into()));
    }
    let per_law = laws
        .iter()
        .enumerate()
        .map(|(k, law)| {
            let q = sample_limit(law, n_ref, opts.seed.wrapping_add(k as u64))?;
            Ok(bl_distance(p, &q, opts))
        })
        .collect::<Result<Vec<_>>>()?;
    let (nearest, distance) = per_law
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    Ok(SetDistance {
        distance,
        nearest,
        per_law,
    })
}

/// `min_f n^-1 sum_i |a_i - f(i/n)|^p`.
pub fn lp_profile_distance(alpha: &[f64], optimizers: &[FieldProfile], p: f64) -> Result<(f64, usize)> {
    if optimizers.is_empty() {
        return Err(Error::Empty("optimizer set is empty".into()));
    }
    if alpha.is_empty() {
        return Err(Error::Empty("no sites".into()));
    }
    if !(p >= 1.0) {
        return Err(Error::Precondition(format!("exponent {p} must be at least 1")));
    }
    let n = alpha.len() as f64;
    let dist = |f: &FieldProfile| {
        alpha
            .iter()
            .enumerate()
            .map(|(i, a)| (a - f.value_at((i + 1) as f64 / n)).abs().powf(p))
            .sum::<f64>()
            / n
    };
    Ok(optimizers
        .iter()
        .map(dist)
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, d)| (d, i))
        .expect("non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_matching(cost: &[f64], n: usize) -> f64 {
        fn rec(cost: &[f64], n: usize, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == n {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[row * n + j] + rec(cost, n, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(cost, n, 0, &mut vec![false; n])
    }

    #[test]
    fn matching_agrees_with_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=7 {
            for _ in 0..5 {
                let cost: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..3.0)).collect();
                let (got, assign) = min_cost_matching(&cost, n);
                assert!((got - brute_matching(&cost, n)).abs() < 1e-12);
                let mut seen = assign.clone();
                seen.sort_unstable();
                assert_eq!(seen, (0..n).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn config_measure_positions() {
        let e = empirical_of_config(&[0.3, -0.7]).unwrap();
        assert_eq!(e.points(), &[(0.5, 0.3), (1.0, -0.7)]);
    }

    #[test]
    fn bl_examples() {
        let a = EmpiricalMeasure2D::new(vec![(0.5, 0.1)]).unwrap();
        let b = EmpiricalMeasure2D::new(vec![(0.5, 0.4)]).unwrap();
        let opts = BlOptions::default();
        assert!((bl_distance(&a, &b, &opts) - 0.3).abs() < 1e-15);
        assert_eq!(bl_distance(&a, &a, &opts), 0.0);
        let far = EmpiricalMeasure2D::new(vec![(0.5, 5.0)]).unwrap();
        assert_eq!(bl_distance(&a, &far, &opts), 2.0);
    }

    #[test]
    fn tilted_half_gives_three_quarters() {
        let law = LimitLaw::ProductTilt {
            profile: FieldProfile::constant(0.5),
            mu: BaseMeasure::ising_pm1(),
        };
        let n = 20_000;
        let e = sample_limit(&law, n, 8).unwrap();
        let ups = e.points().iter().filter(|p| p.1 == 1.0).count() as f64 / n as f64;
        let se = (0.75f64 * 0.25 / n as f64).sqrt();
        assert!((ups - 0.75).abs() < 3.0 * se);
    }

    #[test]
    fn endpoint_profile_is_deterministic() {
        let law = LimitLaw::ProductTilt {
            profile: FieldProfile::constant(1.0),
            mu: BaseMeasure::ising_pm1(),
        };
        let e = sample_limit(&law, 10, 1).unwrap();
        assert!(e.points().iter().all(|p| p.1 == 1.0));
        let bad = LimitLaw::ProductTilt {
            profile: FieldProfile::constant(1.5),
            mu: BaseMeasure::ising_pm1(),
        };
        assert!(sample_limit(&bad, 10, 1).is_err());
    }

    #[test]
    fn curie_weiss_limit_sets() {
        let t = 0.957_504_0;
        let f = vec![FieldProfile::constant(t), FieldProfile::constant(-t)];
        let sets = build_limit_sets(
            &f,
            &MotifGraph::edge(),
            &StepKernel::complete(),
            &BaseMeasure::ising_pm1(),
            1.0,
            0.0,
        )
        .unwrap();
        assert!((sets.b_star[0].profile().values()[0] - 2.0 * t).abs() < 1e-15);
        assert!(sets.consistency[0] < 1e-6);
    }

    #[test]
    fn nearest_branch_is_selected() {
        let laws = vec![
            LimitLaw::Degenerate {
                profile: FieldProfile::constant(1.9),
            },
            LimitLaw::Degenerate {
                profile: FieldProfile::constant(-1.9),
            },
        ];
        let p = empirical_of_fields(&vec![1.85; 100]).unwrap();
        let d = distance_to_set(&p, &laws, 100, &BlOptions::default()).unwrap();
        assert_eq!(d.nearest, 0);
        assert!(d.distance < 0.06);
    }

    #[test]
    fn lp_distance_examples() {
        let f = vec![FieldProfile::constant(0.2), FieldProfile::constant(-0.2)];
        let (d, i) = lp_profile_distance(&[-0.2; 10], &f, 1.0).unwrap();
        assert_eq!((d, i), (0.0, 1));
        assert!(lp_profile_distance(&[0.1], &[], 1.0).is_err());
        assert!(lp_profile_distance(&[0.1], &f, 0.5).is_err());
    }
}
