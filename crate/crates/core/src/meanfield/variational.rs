//! The step-profile free-energy problem
//! `sup_f theta G_W(f) + B int f - int gamma(beta(f))` and its fixed-point characterization.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::scalar::{scalar_fixed_points, scalar_maximizers, ScalarOptimum, ScalarOptions};
use crate::error::{Error, Result};
use crate::exp_family::{BaseMeasure, ExtendedReal};
use crate::motif::{align_profile, MotifGraph, StepKernel};
use crate::profile::FieldProfile;

/// One instance of the variational problem.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub motif: &'a MotifGraph,
    pub kernel: &'a StepKernel,
    pub mu: &'a BaseMeasure,
    pub theta: f64,
    pub field: f64,
}

impl<'a> Problem<'a> {
    pub fn new(
        motif: &'a MotifGraph,
        kernel: &'a StepKernel,
        mu: &'a BaseMeasure,
        theta: f64,
        field: f64,
    ) -> Self {
        Self {
            motif,
            kernel,
            mu,
            theta,
            field,
        }
    }

    /// Objective for values already on the kernel partition.
    fn objective_values(&self, values: &[f64]) -> Result<f64> {
        let g = self.kernel.hom_values(self.motif, values)?;
        let mut lin = 0.0;
        let mut cost = 0.0;
        for (m, x) in self.kernel.masses().iter().zip(values) {
            lin += m * x;
            cost += m * self.mu.rate_at_mean(*x)?;
        }
        Ok(self.theta * g + self.field * lin - cost)
    }

    /// `alpha'(theta vartheta(f) + B)` blockwise.
    fn update_map(&self, values: &[f64]) -> Result<Vec<f64>> {
        let th = self.kernel.vartheta_values(self.motif, values)?;
        Ok(th
            .iter()
            .map(|t| self.mu.tilt_mean(self.theta * t + self.field))
            .collect())
    }

    fn residual_values(&self, values: &[f64]) -> Result<f64> {
        let next = self.update_map(values)?;
        Ok(values
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// `theta G_W(f) + B int f - int gamma(beta(f))`.
pub fn profile_objective(p: &Problem, f: &FieldProfile) -> Result<f64> {
    let (w, vals) = align_profile(p.kernel, f);
    Problem { kernel: &w, ..*p }.objective_values(&vals)
}

/// Per-unit-mass gradient `theta vartheta(f) + B - beta(f)` on the aligned partition.
///
/// Infinite entries mark blocks sitting at a support endpoint.
pub fn profile_gradient(p: &Problem, f: &FieldProfile) -> Result<FieldProfile> {
    let (w, vals) = align_profile(p.kernel, f);
    let th = w.vartheta_values(p.motif, &vals)?;
    let grad = vals
        .iter()
        .zip(&th)
        .map(|(x, t)| {
            let b = match p.mu.inverse_mean(*x)? {
                ExtendedReal::Finite(b) => b,
                ExtendedReal::PosInf => f64::INFINITY,
                ExtendedReal::NegInf => f64::NEG_INFINITY,
            };
            Ok(p.theta * t + p.field - b)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FieldProfile::new_unchecked(w.masses().to_vec(), grad))
}

/// `sup_b |f_b - alpha'(theta vartheta(f)_b + B)|`.
pub fn stationarity_residual(p: &Problem, f: &FieldProfile) -> Result<f64> {
    let (w, vals) = align_profile(p.kernel, f);
    Problem { kernel: &w, ..*p }.residual_values(&vals)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationOptions {
    pub damping: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_iter: 100_000,
            tol: 1e-11,
        }
    }
}

/// Outcome of one fixed-point run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRun {
    pub start: FieldProfile,
    pub profile: FieldProfile,
    pub objective: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Damped iteration `f <- (1 - eta) f + eta alpha'(theta vartheta(f) + B)`.
///
/// If the damped loop stops short of `tol`, a few Newton steps on the
/// fixed-point equation are tried; they are kept only while the residual
/// drops and the profile stays close to where the iteration ended.
pub fn profile_fixed_point(p: &Problem, f0: &FieldProfile, opts: &IterationOptions) -> Result<ProfileRun> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::Precondition(format!(
            "damping {} must lie in (0, 1]",
            opts.damping
        )));
    }
    if !f0.within_hull(p.mu) {
        return Err(Error::Domain {
            value: f0.values().iter().copied().fold(f64::NAN, f64::max),
            min: p.mu.support_min(),
            max: p.mu.support_max(),
        });
    }
    let (w, mut f) = align_profile(p.kernel, f0);
    let q = Problem { kernel: &w, ..*p };
    let eta = opts.damping;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let target = q.update_map(&f)?;
        let mut change = 0.0f64;
        for (x, t) in f.iter_mut().zip(&target) {
            let next = (1.0 - eta) * *x + eta * t;
            change = change.max((next - *x).abs());
            *x = next;
        }
        iterations += 1;
        if change <= opts.tol {
            converged = true;
            break;
        }
    }
    let mut residual = q.residual_values(&f)?;
    if residual > 1e-12 {
        if let Some((g, r)) = newton_polish(&q, &f, residual)? {
            f = g;
            residual = r;
            converged = converged || residual <= opts.tol;
        }
    }
    let objective = q.objective_values(&f)?;
    Ok(ProfileRun {
        start: f0.clone(),
        profile: FieldProfile::new_unchecked(w.masses().to_vec(), f),
        objective,
        residual,
        iterations,
        converged,
    })
}

fn newton_polish(q: &Problem, f0: &[f64], r0: f64) -> Result<Option<(Vec<f64>, f64)>> {
    let k = f0.len();
    let (lo, hi) = (q.mu.support_min(), q.mu.support_max());
    let mut f = f0.to_vec();
    let mut r = r0;
    let mut improved = false;
    for _ in 0..20 {
        let map = q.update_map(&f)?;
        let fx = DVector::from_iterator(k, f.iter().zip(&map).map(|(a, b)| a - b));
        let mut jac = DMatrix::<f64>::identity(k, k);
        for c in 0..k {
            let h = 1e-6 * (1.0 + f[c].abs());
            let mut up = f.clone();
            let mut dn = f.clone();
            up[c] += h;
            dn[c] -= h;
            let mu = q.update_map(&up)?;
            let md = q.update_map(&dn)?;
            for b in 0..k {
                jac[(b, c)] -= (mu[b] - md[b]) / (2.0 * h);
            }
        }
        let Some(step) = jac.lu().solve(&fx) else {
            break;
        };
        let next: Vec<f64> = f.iter().zip(step.iter()).map(|(x, s)| x - s).collect();
        if next.iter().any(|x| !(*x > lo && *x < hi)) {
            break;
        }
        let drift = next
            .iter()
            .zip(f0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if drift > 1e-6 {
            break;
        }
        let rn = q.residual_values(&next)?;
        if rn >= r {
            break;
        }
        f = next;
        r = rn;
        improved = true;
        if r <= 1e-14 {
            break;
        }
    }
    Ok(improved.then_some((f, r)))
}

/// Start set and reduction tolerances for [`solve_free_energy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultistartSpec {
    pub n_random: usize,
    /// Number of evenly spaced constant starts across the support hull.
    pub constant_grid: usize,
    pub seed: u64,
    pub iteration: IterationOptions,
    /// Runs within this of the best objective belong to the optimizer set.
    pub value_tol: f64,
    /// Optimizers closer than this in sup-norm are merged.
    pub dedup_tol: f64,
    /// Largest residual accepted for an optimizer.
    pub residual_tol: f64,
    pub cap: usize,
}

impl Default for MultistartSpec {
    fn default() -> Self {
        Self {
            n_random: 64,
            constant_grid: 9,
            seed: 0,
            iteration: IterationOptions::default(),
            value_tol: 1e-8,
            dedup_tol: 1e-6,
            residual_tol: 1e-8,
            cap: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeEnergyReport {
    /// Best objective found.
    pub z: f64,
    /// Distinct accepted optimizers, best first.
    pub optimizers: Vec<ProfileRun>,
    /// Every run, in start order.
    pub runs: Vec<ProfileRun>,
    /// Exact supremum over constant profiles.
    pub best_constant: ScalarOptimum,
    /// `G_W(1)`, the constant-profile coefficient.
    pub hom_density: f64,
    /// The optimizer list hit `cap` and was truncated.
    pub truncated: bool,
}

/// Multistart fixed-point search for the free energy and its optimizer set.
pub fn solve_free_energy(p: &Problem, spec: &MultistartSpec) -> Result<FreeEnergyReport> {
    let masses = p.kernel.masses().to_vec();
    let v = p.motif.v();
    let (lo, hi) = (p.mu.support_min(), p.mu.support_max());
    let hom_density = p.kernel.hom_values(p.motif, &vec![1.0; masses.len()])?;
    let (_, mean_degree) = p.kernel.is_regular(p.motif, 1e-12)?;

    let mut starts: Vec<FieldProfile> = Vec::new();
    for fp in scalar_fixed_points(p.mu, p.theta * mean_degree, p.field, v) {
        let x = fp.x.clamp(lo, hi);
        starts.push(FieldProfile::constant_on(&masses, x));
    }
    for j in 0..spec.constant_grid {
        let x = lo + (hi - lo) * (j as f64 + 0.5) / spec.constant_grid as f64;
        starts.push(FieldProfile::constant_on(&masses, x));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let margin = 1e-3 * (hi - lo);
    for _ in 0..spec.n_random {
        let vals = (0..masses.len())
            .map(|_| rng.gen_range(lo + margin..hi - margin))
            .collect();
        starts.push(FieldProfile::new_unchecked(masses.clone(), vals));
    }

    let runs = starts
        .par_iter()
        .map(|s| profile_fixed_point(p, s, &spec.iteration))
        .collect::<Result<Vec<_>>>()?;

    let accepted = |r: &ProfileRun| r.converged && r.residual <= spec.residual_tol;
    let z = runs
        .iter()
        .filter(|r| accepted(r))
        .map(|r| r.objective)
        .fold(f64::NEG_INFINITY, f64::max);
    let z = if z.is_finite() {
        z
    } else {
        runs.iter().map(|r| r.objective).fold(f64::NEG_INFINITY, f64::max)
    };

    let mut ranked: Vec<&ProfileRun> = runs
        .iter()
        .filter(|r| accepted(r) && r.objective >= z - spec.value_tol)
        .collect();
    ranked.sort_by(|a, b| b.objective.total_cmp(&a.objective));
    let mut optimizers: Vec<ProfileRun> = Vec::new();
    for r in ranked {
        let dup = optimizers.iter().any(|o| {
            o.profile
                .sup_distance(&r.profile)
                .is_some_and(|d| d <= spec.dedup_tol)
        });
        if !dup {
            optimizers.push(r.clone());
        }
    }
    let truncated = optimizers.len() > spec.cap;
    optimizers.truncate(spec.cap);

    let best_constant =
        scalar_maximizers(p.mu, p.theta * hom_density, p.field, v, &ScalarOptions::default())?
            .optimizers[0];
    Ok(FreeEnergyReport {
        z,
        optimizers,
        runs,
        best_constant,
        hom_density,
        truncated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Symmetric,
    Broken,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Symmetric => "symmetric",
            Verdict::Broken => "broken",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Status of the sufficient conditions for constant optimizers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymmetryConditions {
    pub regular: bool,
    /// `theta W > 0` everywhere.
    pub signed_positive: bool,
    /// `v` even, or the base measure is stochastically non-negative.
    pub parity_or_nonneg: bool,
}

impl SymmetryConditions {
    pub fn all(&self) -> bool {
        self.regular && self.signed_positive && self.parity_or_nonneg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryReport {
    pub verdict: Verdict,
    pub conditions: SymmetryConditions,
    pub best_constant: f64,
    pub best_nonconstant: Option<f64>,
    pub solve: FreeEnergyReport,
}

const CONSTANT_TOL: f64 = 1e-6;

/// Classifies the optimizer set as replica symmetric, broken, or inconclusive.
pub fn replica_symmetry_verdict(p: &Problem, spec: &MultistartSpec) -> Result<SymmetryReport> {
    let solve = solve_free_energy(p, spec)?;
    let accepted = |r: &&ProfileRun| r.converged && r.residual <= spec.residual_tol;
    let best_constant_run = solve
        .runs
        .iter()
        .filter(accepted)
        .filter(|r| r.profile.is_constant(CONSTANT_TOL))
        .map(|r| r.objective)
        .fold(f64::NEG_INFINITY, f64::max);
    let best_constant = best_constant_run.max(solve.best_constant.value);
    let best_nonconstant = solve
        .runs
        .iter()
        .filter(accepted)
        .filter(|r| !r.profile.is_constant(CONSTANT_TOL))
        .map(|r| r.objective)
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))));

    let all_constant = solve
        .optimizers
        .iter()
        .all(|o| o.profile.is_constant(CONSTANT_TOL));
    let verdict = match best_nonconstant {
        Some(nc) if nc > best_constant + 1e-6 => Verdict::Broken,
        nc if all_constant && nc.is_none_or(|x| x <= best_constant + 1e-8) => Verdict::Symmetric,
        _ => Verdict::Inconclusive,
    };

    let (regular, _) = p.kernel.is_regular(p.motif, 1e-12)?;
    let signed_positive = (p.theta > 0.0 && p.kernel.min_value() > 0.0)
        || (p.theta < 0.0 && p.kernel.max_value() < 0.0);
    let parity_or_nonneg = p.motif.v() % 2 == 0 || p.mu.is_stochastically_nonneg(512);
    Ok(SymmetryReport {
        verdict,
        conditions: SymmetryConditions {
            regular,
            signed_positive,
            parity_or_nonneg,
        },
        best_constant,
        best_nonconstant,
        solve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tanh_root(theta: f64) -> f64 {
        let (mut lo, mut hi) = (1e-9, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid < (2.0 * theta * mid).tanh() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn objective_examples() {
        let k2 = MotifGraph::edge();
        let w = StepKernel::complete();
        let mu = BaseMeasure::ising_pm1();
        let p = Problem::new(&k2, &w, &mu, 0.0, 0.0);
        assert_eq!(profile_objective(&p, &FieldProfile::constant(0.0)).unwrap(), 0.0);

        let three = BaseMeasure::three_point(0.4).unwrap();
        let k3 = MotifGraph::complete(3).unwrap();
        let tri = StepKernel::tripartite();
        let t: f64 = 0.3;
        let p = Problem::new(&k3, &tri, &three, 1.7, 0.2);
        let got = profile_objective(&p, &FieldProfile::constant(t)).unwrap();
        let expect = 1.7 * (2.0 / 9.0) * t.powi(3) + 0.2 * t - three.rate_at_mean(t).unwrap();
        assert!((got - expect).abs() < 1e-14);
    }

    #[test]
    fn damping_one_with_zero_theta_lands_in_one_step() {
        let k2 = MotifGraph::edge();
        let w = StepKernel::bipartite(1.0);
        let mu = BaseMeasure::ising_pm1();
        let p = Problem::new(&k2, &w, &mu, 0.0, 0.3);
        let opts = IterationOptions {
            damping: 1.0,
            ..Default::default()
        };
        let run = profile_fixed_point(&p, &FieldProfile::constant(0.0), &opts).unwrap();
        assert!(run.converged);
        assert_eq!(run.iterations, 2);
        for x in run.profile.values() {
            assert!((x - 0.3f64.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn curie_weiss_profile_fixed_point() {
        let k2 = MotifGraph::edge();
        let w = StepKernel::complete();
        let mu = BaseMeasure::ising_pm1();
        let p = Problem::new(&k2, &w, &mu, 1.0, 0.0);
        let run = profile_fixed_point(&p, &FieldProfile::constant(0.5), &Default::default()).unwrap();
        assert!(run.converged && run.residual <= 1e-10);
        assert!((run.profile.values()[0] - tanh_root(1.0)).abs() < 1e-10);
    }

    #[test]
    fn antiferromagnetic_bipartite_splits_signs() {
        let k2 = MotifGraph::edge();
        let w = StepKernel::bipartite(2.0);
        let mu = BaseMeasure::ising_pm1();
        let p = Problem::new(&k2, &w, &mu, -5.0, 0.0);
        let f0 = FieldProfile::uniform(vec![0.5, -0.5]).unwrap();
        let run = profile_fixed_point(&p, &f0, &Default::default()).unwrap();
        let v = run.profile.values();
        assert!(run.converged);
        assert!(v[0] > 0.0 && v[1] < 0.0 && (v[0] + v[1]).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_damping() {
        let k2 = MotifGraph::edge();
        let w = StepKernel::complete();
        let mu = BaseMeasure::ising_pm1();
        let p = Problem::new(&k2, &w, &mu, 1.0, 0.0);
        let opts = IterationOptions {
            damping: 0.0,
            ..Default::default()
        };
        assert!(profile_fixed_point(&p, &FieldProfile::constant(0.1), &opts).is_err());
        assert!(profile_fixed_point(&p, &FieldProfile::constant(3.0), &Default::default()).is_err());
    }

    #[test]
    fn free_energy_at_zero_theta() {
        let k2 = MotifGraph::edge();
        let w = StepKernel::bipartite(1.0);
        let mu = BaseMeasure::bernoulli(0.3).unwrap();
        let p = Problem::new(&k2, &w, &mu, 0.0, 0.0);
        let spec = MultistartSpec {
            n_random: 8,
            ..Default::default()
        };
        let r = solve_free_energy(&p, &spec).unwrap();
        assert!(r.z.abs() < 1e-12);
        assert_eq!(r.optimizers.len(), 1);
        for x in r.optimizers[0].profile.values() {
            assert!((x - 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn curie_weiss_free_energy_matches_scalar() {
        let k2 = MotifGraph::edge();
        let w = StepKernel::complete();
        let mu = BaseMeasure::ising_pm1();
        let p = Problem::new(&k2, &w, &mu, 1.0, 0.0);
        let r = solve_free_energy(&p, &MultistartSpec::default()).unwrap();
        let t = tanh_root(1.0);
        let z = t * t - mu.rate_at_mean(t).unwrap();
        assert!((r.z - z).abs() < 1e-9);
        assert_eq!(r.optimizers.len(), 2);
    }

    #[test]
    fn regular_positive_kernel_is_symmetric() {
        let k2 = MotifGraph::edge();
        let w = StepKernel::uniform(vec![
            vec![1.5, 0.75, 0.75],
            vec![0.75, 1.5, 0.75],
            vec![0.75, 0.75, 1.5],
        ])
        .unwrap();
        let mu = BaseMeasure::ising_pm1();
        let p = Problem::new(&k2, &w, &mu, 1.0, 0.0);
        let r = replica_symmetry_verdict(&p, &MultistartSpec::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Symmetric);
        assert!(r.conditions.all());
        assert!(r.solve.optimizers.iter().all(|o| o.profile.is_constant(1e-6)));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let k3 = MotifGraph::cherry();
        let w = StepKernel::new(
            vec![0.2, 0.5, 0.3],
            vec![vec![0.4, 1.2, -0.3], vec![1.2, 0.1, 0.8], vec![-0.3, 0.8, 1.0]],
        )
        .unwrap();
        let mu = BaseMeasure::three_point(0.3).unwrap();
        let p = Problem::new(&k3, &w, &mu, 1.3, -0.2);
        let f = FieldProfile::new(vec![0.2, 0.5, 0.3], vec![0.3, -0.45, 0.6]).unwrap();
        let dir = [0.7, -0.2, 0.5];
        let grad = profile_gradient(&p, &f).unwrap();
        let analytic: f64 = (0..3).map(|b| f.masses()[b] * dir[b] * grad.values()[b]).sum();
        let h = 1e-5;
        let shift = |s: f64| {
            let v = f.values().iter().zip(&dir).map(|(x, d)| x + s * d).collect();
            FieldProfile::new(f.masses().to_vec(), v).unwrap()
        };
        let numeric = (profile_objective(&p, &shift(h)).unwrap()
            - profile_objective(&p, &shift(-h)).unwrap())
            / (2.0 * h);
        assert!((analytic - numeric).abs() <= 1e-6 * analytic.abs().max(1e-3));
    }
}
