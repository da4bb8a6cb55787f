//! Finite-n Gibbs measures: the multilinear Hamiltonian, local fields, heat-bath
//! Glauber dynamics, and exact enumeration for tiny systems.
//!
//! All distinct-tuple sums are exact. For block couplings they are evaluated by
//! Moebius inversion over set partitions of the motif's vertices, which turns a
//! sum over distinct site tuples into signed sums of products of per-block power
//! sums `S_b^(r) = sum_{i in b} X_i^r`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exp_family::{log_sum_exp, BaseMeasure};
use crate::motif::{for_each_tuple, CouplingMatrix, MotifGraph, StepKernel, MAX_TUPLES};

/// Largest configuration count [`exact_small_n`] will enumerate.
pub const MAX_ENUMERATION: usize = 10_000_000;
/// Largest state space for [`exact_glauber_stationarity`].
pub const MAX_CHAIN_STATES: usize = 4096;
/// Largest state space for [`permutation_invariance_check`].
pub const MAX_PERMUTATION_STATES: usize = 1_000_000;
const LAW_MERGE_TOL: f64 = 1e-12;
const AUDIT_EVERY: usize = 100;
const BATCHES: usize = 16;

/// Pairwise couplings of an `n`-site system.
#[derive(Debug, Clone, PartialEq)]
pub enum Coupling {
    Dense(CouplingMatrix),
    /// `Q(i,j) = W(assignment[i], assignment[j])` off the diagonal.
    Block {
        kernel: StepKernel,
        assignment: Vec<usize>,
    },
}

/// One term `mu(pi) * sum_{labels} prod_s S^(|B_s|) prod_E W` of the Moebius expansion.
#[derive(Debug, Clone, PartialEq)]
struct PartitionTerm {
    coeff: f64,
    sizes: Vec<usize>,
    edges: Vec<(usize, usize)>,
    /// Block holding the anchored slot, for local fields.
    pinned: Option<usize>,
}

/// Set partitions of `0..v` as restricted growth strings.
fn set_partitions(v: usize) -> Vec<Vec<usize>> {
    fn grow(cur: &mut Vec<usize>, v: usize, max: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == v {
            out.push(cur.clone());
            return;
        }
        let top = if cur.is_empty() { 0 } else { max + 1 };
        for b in 0..=top {
            cur.push(b);
            grow(cur, v, max.max(b), out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut Vec::with_capacity(v), v, 0, &mut out);
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|x| x as f64).product()
}

fn partition_terms(motif: &MotifGraph, anchor: Option<usize>) -> Vec<PartitionTerm> {
    set_partitions(motif.v())
        .into_iter()
        .map(|rgs| {
            let r = rgs.iter().max().map_or(0, |m| m + 1);
            let mut sizes = vec![0usize; r];
            for &b in &rgs {
                sizes[b] += 1;
            }
            let coeff = sizes
                .iter()
                .map(|&s| if s % 2 == 1 { 1.0 } else { -1.0 } * factorial(s - 1))
                .product();
            let edges = motif.edges().iter().map(|&(a, b)| (rgs[a], rgs[b])).collect();
            PartitionTerm {
                coeff,
                sizes,
                edges,
                pinned: anchor.map(|a| rgs[a]),
            }
        })
        .collect()
}

/// Finite-n model: motif, coupling, base measure, coupling strength and field.
///
/// The field enters only by tilting the base measure to `mu_B`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    motif: MotifGraph,
    coupling: Coupling,
    mu: BaseMeasure,
    site_measure: BaseMeasure,
    theta: f64,
    field: f64,
    n: usize,
    hamiltonian_terms: Vec<PartitionTerm>,
    field_terms: Vec<Vec<PartitionTerm>>,
}

/// Contiguous block assignment with block sizes proportional to `masses`.
pub fn blow_up_assignment(masses: &[f64], n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut prev = 0usize;
    for (b, m) in masses.iter().enumerate() {
        cum += m;
        let end = if b + 1 == masses.len() {
            n
        } else {
            ((cum * n as f64).round() as usize).min(n)
        };
        for _ in prev..end.max(prev) {
            out.push(b);
        }
        prev = end.max(prev);
    }
    out
}

impl ModelSpec {
    fn build(
        motif: MotifGraph,
        coupling: Coupling,
        mu: BaseMeasure,
        theta: f64,
        field: f64,
    ) -> Result<Self> {
        let n = match &coupling {
            Coupling::Dense(q) => q.n(),
            Coupling::Block { kernel, assignment } => {
                if let Some(&b) = assignment.iter().find(|&&b| b >= kernel.k()) {
                    return Err(Error::InvalidKernel(format!(
                        "site assigned to block {b} but the kernel has {} blocks",
                        kernel.k()
                    )));
                }
                assignment.len()
            }
        };
        if n < motif.v() {
            return Err(Error::Size(format!(
                "n={n} is smaller than the motif size {}",
                motif.v()
            )));
        }
        if !theta.is_finite() || !field.is_finite() {
            return Err(Error::Precondition("theta and field must be finite".into()));
        }
        let site_measure = mu.tilted_measure(field);
        let hamiltonian_terms = partition_terms(&motif, None);
        let field_terms = (0..motif.v()).map(|a| partition_terms(&motif, Some(a))).collect();
        Ok(Self {
            motif,
            coupling,
            mu,
            site_measure,
            theta,
            field,
            n,
            hamiltonian_terms,
            field_terms,
        })
    }

    pub fn dense(
        motif: MotifGraph,
        q: CouplingMatrix,
        mu: BaseMeasure,
        theta: f64,
        field: f64,
    ) -> Result<Self> {
        Self::build(motif, Coupling::Dense(q), mu, theta, field)
    }

    /// Blows `kernel` up to `n` sites with contiguous proportional blocks.
    pub fn block(
        motif: MotifGraph,
        kernel: StepKernel,
        n: usize,
        mu: BaseMeasure,
        theta: f64,
        field: f64,
    ) -> Result<Self> {
        let assignment = blow_up_assignment(kernel.masses(), n);
        Self::block_with_assignment(motif, kernel, assignment, mu, theta, field)
    }

    pub fn block_with_assignment(
        motif: MotifGraph,
        kernel: StepKernel,
        assignment: Vec<usize>,
        mu: BaseMeasure,
        theta: f64,
        field: f64,
    ) -> Result<Self> {
        Self::build(motif, Coupling::Block { kernel, assignment }, mu, theta, field)
    }

    pub fn motif(&self) -> &MotifGraph {
        &self.motif
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn mu(&self) -> &BaseMeasure {
        &self.mu
    }

    /// `mu_B`, the per-site measure before interaction.
    pub fn site_measure(&self) -> &BaseMeasure {
        &self.site_measure
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn field(&self) -> f64 {
        self.field
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn v(&self) -> usize {
        self.motif.v()
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        Self::build(
            self.motif.clone(),
            self.coupling.clone(),
            self.mu.clone(),
            theta,
            self.field,
        )
    }

    /// `Q(i, j)`, zero on the diagonal.
    pub fn coupling_entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        match &self.coupling {
            Coupling::Dense(q) => q.get(i, j),
            Coupling::Block { kernel, assignment } => kernel.value(assignment[i], assignment[j]),
        }
    }

    pub fn to_dense(&self) -> CouplingMatrix {
        let e = (0..self.n)
            .map(|i| (0..self.n).map(|j| self.coupling_entry(i, j)).collect())
            .collect();
        CouplingMatrix::new(e).expect("blow-up is symmetric with zero diagonal")
    }

    /// The model with sites relabelled: `Q'(i, j) = Q(perm[i], perm[j])`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        let coupling = match &self.coupling {
            Coupling::Dense(q) => Coupling::Dense(q.permuted(perm)),
            Coupling::Block { kernel, assignment } => Coupling::Block {
                kernel: kernel.clone(),
                assignment: perm.iter().map(|&p| assignment[p]).collect(),
            },
        };
        Self::build(
            self.motif.clone(),
            coupling,
            self.mu.clone(),
            self.theta,
            self.field,
        )
    }

    fn check_config(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Size(format!(
                "configuration has {} sites, model has {}",
                x.len(),
                self.n
            )));
        }
        Ok(())
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::Size(format!("permutation of length {} for n={n}", perm.len())));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::Precondition("not a permutation".into()));
        }
        seen[p] = true;
    }
    Ok(())
}

/// `sums[b][r] = sum_{i in block b} x_i^r` for `r = 0..=v`.
fn power_sums(kernel: &StepKernel, assignment: &[usize], x: &[f64], v: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; v + 1]; kernel.k()];
    for (&b, &xi) in assignment.iter().zip(x) {
        let mut p = 1.0;
        for r in 0..=v {
            sums[b][r] += p;
            p *= xi;
        }
    }
    sums
}

fn eval_terms(
    terms: &[PartitionTerm],
    kernel: &StepKernel,
    sums: &[Vec<f64>],
    anchor: Option<(usize, f64)>,
) -> f64 {
    let k = kernel.k();
    let mut total = 0.0;
    let mut labels = Vec::new();
    for t in terms {
        let r = t.sizes.len();
        let free: Vec<usize> = (0..r).filter(|&s| Some(s) != t.pinned).collect();
        let mut pinned_factor = 1.0;
        labels.clear();
        labels.resize(r, 0);
        if let (Some(p), Some((label, xi))) = (t.pinned, anchor) {
            labels[p] = label;
            pinned_factor = xi.powi(t.sizes[p] as i32 - 1);
        }
        if pinned_factor == 0.0 {
            continue;
        }
        let mut acc = 0.0;
        for_each_tuple(k, free.len(), |tuple| {
            let mut prod = 1.0;
            for (&s, &b) in free.iter().zip(tuple) {
                labels[s] = b;
                prod *= sums[b][t.sizes[s]];
            }
            if prod == 0.0 {
                return;
            }
            for &(s, u) in &t.edges {
                prod *= kernel.value(labels[s], labels[u]);
            }
            acc += prod;
        });
        total += t.coeff * pinned_factor * acc;
    }
    total
}

fn tuple_budget(n: usize, len: usize) -> Result<()> {
    let total = (0..len).fold(1usize, |acc, _| acc.saturating_mul(n));
    if total > MAX_TUPLES {
        return Err(Error::Size(format!(
            "{n}^{len} site tuples exceed the budget of {MAX_TUPLES}"
        )));
    }
    Ok(())
}

/// Visits every tuple of distinct sites in `0..n` of length `len` that avoids `skip`.
fn for_each_distinct(n: usize, len: usize, skip: Option<usize>, f: &mut impl FnMut(&[usize])) {
    fn rec(n: usize, len: usize, skip: Option<usize>, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == len {
            f(cur);
            return;
        }
        for j in 0..n {
            if Some(j) == skip || cur.contains(&j) {
                continue;
            }
            cur.push(j);
            rec(n, len, skip, cur, f);
            cur.pop();
        }
    }
    rec(n, len, skip, &mut Vec::with_capacity(len), f);
}

/// `U_n(X) = n^-v sum over distinct tuples of prod X * Sym[Q]`.
pub fn hamiltonian(spec: &ModelSpec, x: &[f64]) -> Result<f64> {
    spec.check_config(x)?;
    let n = spec.n;
    let v = spec.v();
    let scale = (n as f64).powi(-(v as i32));
    match &spec.coupling {
        Coupling::Block { kernel, assignment } => {
            let sums = power_sums(kernel, assignment, x, v);
            Ok(scale * eval_terms(&spec.hamiltonian_terms, kernel, &sums, None))
        }
        Coupling::Dense(q) => {
            tuple_budget(n, v)?;
            let edges = spec.motif.edges();
            let mut total = 0.0;
            for_each_distinct(n, v, None, &mut |t| {
                let mut prod: f64 = t.iter().map(|&i| x[i]).product();
                if prod == 0.0 {
                    return;
                }
                for &(a, b) in edges {
                    prod *= q.get(t[a], t[b]);
                }
                total += prod;
            });
            Ok(scale * total)
        }
    }
}

fn local_field_with(spec: &ModelSpec, x: &[f64], i: usize, sums: Option<&[Vec<f64>]>) -> Result<f64> {
    let n = spec.n;
    let v = spec.v();
    let scale = (n as f64).powi(1 - v as i32);
    match &spec.coupling {
        Coupling::Block { kernel, assignment } => {
            let owned;
            let sums = match sums {
                Some(s) => s,
                None => {
                    owned = power_sums(kernel, assignment, x, v);
                    &owned
                }
            };
            let anchor = Some((assignment[i], x[i]));
            let total: f64 = spec
                .field_terms
                .iter()
                .map(|terms| eval_terms(terms, kernel, sums, anchor))
                .sum();
            Ok(scale * total)
        }
        Coupling::Dense(q) => {
            tuple_budget(n, v - 1)?;
            let edges = spec.motif.edges();
            let mut total = 0.0;
            let mut full = vec![0usize; v];
            for a in 0..v {
                for_each_distinct(n, v - 1, Some(i), &mut |rest| {
                    let mut prod = 1.0;
                    let mut c = 0;
                    for (slot, f) in full.iter_mut().enumerate() {
                        if slot == a {
                            *f = i;
                        } else {
                            *f = rest[c];
                            prod *= x[rest[c]];
                            c += 1;
                        }
                    }
                    if prod == 0.0 {
                        return;
                    }
                    for &(s, u) in edges {
                        prod *= q.get(full[s], full[u]);
                    }
                    total += prod;
                });
            }
            Ok(scale * total)
        }
    }
}

/// `m_i = v n^-(v-1) sum over distinct tuples avoiding i of Sym[Q](i, ...) prod X`.
pub fn local_field(spec: &ModelSpec, x: &[f64], i: usize) -> Result<f64> {
    spec.check_config(x)?;
    if i >= spec.n {
        return Err(Error::Size(format!("site {i} out of range for n={}", spec.n)));
    }
    local_field_with(spec, x, i, None)
}

/// All local fields.
pub fn local_fields(spec: &ModelSpec, x: &[f64]) -> Result<Vec<f64>> {
    spec.check_config(x)?;
    let sums = match &spec.coupling {
        Coupling::Block { kernel, assignment } => Some(power_sums(kernel, assignment, x, spec.v())),
        Coupling::Dense(_) => None,
    };
    (0..spec.n)
        .map(|i| local_field_with(spec, x, i, sums.as_deref()))
        .collect()
}

/// `n^-1 sum_i X_i m_i`, which equals `v U_n`.
pub fn hamiltonian_stat(spec: &ModelSpec, x: &[f64]) -> Result<f64> {
    let m = local_fields(spec, x)?;
    Ok(x.iter().zip(&m).map(|(a, b)| a * b).sum::<f64>() / spec.n as f64)
}

/// `n^-1 sum_i c_i X_i`.
pub fn contrast(c: &[f64], x: &[f64]) -> Result<f64> {
    if c.len() != x.len() || x.is_empty() {
        return Err(Error::Size(format!(
            "{} weights for {} sites",
            c.len(),
            x.len()
        )));
    }
    Ok(c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / x.len() as f64)
}

/// `c_i = (-1)^i` for sites numbered from 1.
pub fn alternating_weights(n: usize) -> Vec<f64> {
    (1..=n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect()
}

/// `(n^-1 sum |X_i|^p, n^-1 sum |m_i|^q, n^-1 sum |alpha'(theta m_i)|^p)`, with
/// `alpha'` taken under the field-tilted site measure.
pub fn moment_diagnostics(spec: &ModelSpec, x: &[f64], p: f64, q: f64) -> Result<[f64; 3]> {
    let m = local_fields(spec, x)?;
    Ok(moments_from(spec, x, &m, p, q))
}

fn moments_from(spec: &ModelSpec, x: &[f64], m: &[f64], p: f64, q: f64) -> [f64; 3] {
    let n = x.len() as f64;
    let a = x.iter().map(|v| v.abs().powf(p)).sum::<f64>() / n;
    let b = m.iter().map(|v| v.abs().powf(q)).sum::<f64>() / n;
    let c = m
        .iter()
        .map(|mi| spec.site_measure.tilt_mean(spec.theta * mi).abs().powf(p))
        .sum::<f64>()
        / n;
    [a, b, c]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scan {
    #[default]
    Random,
    Sequential,
}

/// Running Glauber chain.
#[derive(Debug, Clone)]
pub struct SamplerState<'a> {
    spec: &'a ModelSpec,
    x: Vec<f64>,
    sums: Option<Vec<Vec<f64>>>,
    rng: ChaCha8Rng,
    sweeps: usize,
    audit_max: f64,
    log_w: Vec<f64>,
    probs: Vec<f64>,
}

impl<'a> SamplerState<'a> {
    /// Starts from i.i.d. draws of the field-tilted site measure.
    pub fn new(spec: &'a ModelSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log_w = spec.site_measure.log_weights().to_vec();
        let mut probs = vec![0.0; log_w.len()];
        let x: Vec<f64> = (0..spec.n)
            .map(|_| draw(&spec.site_measure, &log_w, 0.0, &mut probs, &mut rng))
            .collect();
        let sums = match &spec.coupling {
            Coupling::Block { kernel, assignment } => Some(power_sums(kernel, assignment, &x, spec.v())),
            Coupling::Dense(_) => None,
        };
        Self {
            spec,
            x,
            sums,
            rng,
            sweeps: 0,
            audit_max: 0.0,
            log_w,
            probs,
        }
    }

    /// Starts from a given configuration, which must consist of atoms.
    pub fn from_config(spec: &'a ModelSpec, x: Vec<f64>, seed: u64) -> Result<Self> {
        spec.check_config(&x)?;
        if x.iter().any(|xi| !spec.site_measure.points().contains(xi)) {
            return Err(Error::Precondition("configuration values must be atoms".into()));
        }
        let mut s = Self::new(spec, seed);
        s.sums = match &spec.coupling {
            Coupling::Block { kernel, assignment } => Some(power_sums(kernel, assignment, &x, spec.v())),
            Coupling::Dense(_) => None,
        };
        s.x = x;
        Ok(s)
    }

    pub fn config(&self) -> &[f64] {
        &self.x
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// Largest block-sum drift found by the periodic audits.
    pub fn audit_max(&self) -> f64 {
        self.audit_max
    }

    pub fn local_field(&self, i: usize) -> f64 {
        local_field_with(self.spec, &self.x, i, self.sums.as_deref())
            .expect("sizes validated at construction")
    }

    pub fn local_fields(&self) -> Vec<f64> {
        (0..self.spec.n).map(|i| self.local_field(i)).collect()
    }

    /// Heat-bath update of site `i`.
    pub fn update_site(&mut self, i: usize) {
        let m = self.local_field(i);
        let old = self.x[i];
        let new = draw(
            &self.spec.site_measure,
            &self.log_w,
            self.spec.theta * m,
            &mut self.probs,
            &mut self.rng,
        );
        if new != old {
            if let (Some(sums), Coupling::Block { assignment, .. }) = (&mut self.sums, &self.spec.coupling) {
                let row = &mut sums[assignment[i]];
                let (mut po, mut pn) = (old, new);
                for s in row.iter_mut().skip(1) {
                    *s += pn - po;
                    po *= old;
                    pn *= new;
                }
            }
            self.x[i] = new;
        }
    }

    /// One sweep of `n` site visits.
    pub fn sweep(&mut self, scan: Scan) {
        let n = self.spec.n;
        for t in 0..n {
            let i = match scan {
                Scan::Random => self.rng.gen_range(0..n),
                Scan::Sequential => t,
            };
            self.update_site(i);
        }
        self.sweeps += 1;
        if self.sweeps % AUDIT_EVERY == 0 {
            self.audit();
        }
    }

    /// Recomputes block sums, records the drift and resynchronizes.
    pub fn audit(&mut self) -> f64 {
        let mut drift: f64 = 0.0;
        if let (Some(sums), Coupling::Block { kernel, assignment }) = (&mut self.sums, &self.spec.coupling) {
            let fresh = power_sums(kernel, assignment, &self.x, self.spec.v());
            for (a, b) in sums.iter().flatten().zip(fresh.iter().flatten()) {
                drift = drift.max((a - b).abs());
            }
            *sums = fresh;
        }
        self.audit_max = self.audit_max.max(drift);
        drift
    }
}

/// Samples an atom of `mu` tilted by `h`.
fn draw(mu: &BaseMeasure, log_w: &[f64], h: f64, probs: &mut [f64], rng: &mut ChaCha8Rng) -> f64 {
    let pts = mu.points();
    let mut top = f64::NEG_INFINITY;
    for (p, (lw, x)) in probs.iter_mut().zip(log_w.iter().zip(pts)) {
        *p = lw + h * x;
        top = top.max(*p);
    }
    let mut total = 0.0;
    for p in probs.iter_mut() {
        *p = (*p - top).exp();
        total += *p;
    }
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (p, x) in probs.iter().zip(pts) {
        acc += p;
        if u < acc {
            return *x;
        }
    }
    *pts.last().expect("non-empty support")
}

/// Conditional law of one site given local field `m`: `mu_B` tilted by `theta m`.
pub fn conditional_probs(spec: &ModelSpec, m: f64) -> Vec<f64> {
    spec.site_measure.tilted_measure(spec.theta * m).weights().to_vec()
}

/// Statistics recorded along a chain.
#[derive(Debug, Clone, PartialEq)]
pub enum Statistic {
    Magnetization,
    AbsMagnetization,
    HamiltonianStat,
    /// Alternating contrast `c_i = (-1)^i`.
    AlternatingContrast,
    Contrast { name: String, weights: Vec<f64> },
    /// Three series: `moment_x`, `moment_m`, `moment_mean`.
    Moments { p: f64, q: f64 },
}

impl Statistic {
    /// Parses `mag`, `absmag`, `ham`, `contrast:alt`, `moments`, `moments:p,q`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "mag" => Statistic::Magnetization,
            "absmag" => Statistic::AbsMagnetization,
            "ham" => Statistic::HamiltonianStat,
            "contrast:alt" => Statistic::AlternatingContrast,
            "moments" => Statistic::Moments { p: 2.0, q: 2.0 },
            _ => {
                if let Some(rest) = s.strip_prefix("moments:") {
                    let parts: Vec<&str> = rest.split(',').collect();
                    let num = |t: &str| {
                        t.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Unsupported(format!("bad moment exponent '{t}'")))
                    };
                    if parts.len() != 2 {
                        return Err(Error::Unsupported(format!("expected moments:p,q, got '{s}'")));
                    }
                    Statistic::Moments {
                        p: num(parts[0])?,
                        q: num(parts[1])?,
                    }
                } else {
                    return Err(Error::Unsupported(format!("unknown statistic '{s}'")));
                }
            }
        })
    }

    fn names(&self) -> Vec<String> {
        match self {
            Statistic::Magnetization => vec!["mag".into()],
            Statistic::AbsMagnetization => vec!["absmag".into()],
            Statistic::HamiltonianStat => vec!["ham".into()],
            Statistic::AlternatingContrast => vec!["contrast_alt".into()],
            Statistic::Contrast { name, .. } => vec![format!("contrast_{name}")],
            Statistic::Moments { .. } => {
                vec!["moment_x".into(), "moment_m".into(), "moment_mean".into()]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub scan: Scan,
    pub stats: Vec<Statistic>,
    /// Store `(X, m)` every this many post-burn-in sweeps.
    pub snapshot_every: Option<usize>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            sweeps: 1000,
            burn_in: 200,
            thin: 1,
            seed: 0,
            scan: Scan::Random,
            stats: vec![Statistic::Magnetization],
            snapshot_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub sweep: usize,
    pub stat: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatSummary {
    pub stat: String,
    pub mean: f64,
    /// Batch-means standard error over 16 batches; NaN with fewer than 16 records.
    pub batch_se: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub sweep: usize,
    pub x: Vec<f64>,
    pub m: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    pub summaries: Vec<StatSummary>,
    pub snapshots: Vec<Snapshot>,
    pub final_config: Vec<f64>,
    pub audit_max: f64,
}

impl ChainResult {
    pub fn summary(&self, stat: &str) -> Option<&StatSummary> {
        self.summaries.iter().find(|s| s.stat == stat)
    }

    /// Long-format trace: `sweep,stat,value,batch_se`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("sweep,stat,value,batch_se\n");
        for r in &self.rows {
            let se = self.summary(&r.stat).map_or(f64::NAN, |s| s.batch_se);
            out.push_str(&format!("{},{},{:.16e},{:.16e}\n", r.sweep, r.stat, r.value, se));
        }
        out
    }
}

/// Mean and batch-means standard error.
pub fn batch_means(values: &[f64], batches: usize) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let size = values.len() / batches.max(1);
    if batches < 2 || size == 0 {
        return (mean, f64::NAN);
    }
    let tail = &values[values.len() - size * batches..];
    let bm: Vec<f64> = tail
        .chunks(size)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let grand = bm.iter().sum::<f64>() / batches as f64;
    let var = bm.iter().map(|b| (b - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

/// Runs one Glauber chain and records the requested statistics.
pub fn sample_chain(spec: &ModelSpec, cfg: &ChainConfig) -> Result<ChainResult> {
    if cfg.burn_in >= cfg.sweeps {
        return Err(Error::Precondition(format!(
            "burn-in {} must be below the sweep count {}",
            cfg.burn_in, cfg.sweeps
        )));
    }
    if cfg.thin == 0 {
        return Err(Error::Precondition("thin must be positive".into()));
    }
    for s in &cfg.stats {
        if let Statistic::Contrast { weights, .. } = s {
            if weights.len() != spec.n {
                return Err(Error::Size(format!(
                    "contrast has {} weights for n={}",
                    weights.len(),
                    spec.n
                )));
            }
        }
    }
    let names: Vec<String> = cfg.stats.iter().flat_map(|s| s.names()).collect();
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let alt = alternating_weights(spec.n);
    let needs_fields = cfg
        .stats
        .iter()
        .any(|s| matches!(s, Statistic::HamiltonianStat | Statistic::Moments { .. }));
    let mut state = SamplerState::new(spec, cfg.seed);
    let mut rows = Vec::new();
    let mut snapshots = Vec::new();
    let n = spec.n as f64;
    for sweep in 1..=cfg.sweeps {
        state.sweep(cfg.scan);
        if sweep <= cfg.burn_in {
            continue;
        }
        let since = sweep - cfg.burn_in;
        let snap = cfg.snapshot_every.is_some_and(|e| e > 0 && since % e == 0);
        let record = since % cfg.thin == 0;
        if !record && !snap {
            continue;
        }
        let x = state.config();
        let m = if needs_fields || snap {
            state.local_fields()
        } else {
            Vec::new()
        };
        if snap {
            snapshots.push(Snapshot {
                sweep,
                x: x.to_vec(),
                m: m.clone(),
            });
        }
        if !record {
            continue;
        }
        let mut values = Vec::with_capacity(names.len());
        let mean = x.iter().sum::<f64>() / n;
        for s in &cfg.stats {
            match s {
                Statistic::Magnetization => values.push(mean),
                Statistic::AbsMagnetization => values.push(mean.abs()),
                Statistic::HamiltonianStat => {
                    values.push(x.iter().zip(&m).map(|(a, b)| a * b).sum::<f64>() / n)
                }
                Statistic::AlternatingContrast => values.push(contrast(&alt, x)?),
                Statistic::Contrast { weights, .. } => values.push(contrast(weights, x)?),
                Statistic::Moments { p, q } => values.extend(moments_from(spec, x, &m, *p, *q)),
            }
        }
        for ((name, val), ser) in names.iter().zip(values).zip(series.iter_mut()) {
            rows.push(TraceRow {
                sweep,
                stat: name.clone(),
                value: val,
            });
            ser.push(val);
        }
    }
    let summaries = names
        .iter()
        .zip(&series)
        .map(|(name, ser)| {
            let (mean, batch_se) = batch_means(ser, BATCHES);
            StatSummary {
                stat: name.clone(),
                mean,
                batch_se,
                count: ser.len(),
            }
        })
        .collect();
    state.audit();
    Ok(ChainResult {
        seed: cfg.seed,
        rows,
        summaries,
        snapshots,
        final_config: state.config().to_vec(),
        audit_max: state.audit_max(),
    })
}

/// Independent chains, one per seed, run in parallel and returned in seed order.
pub fn sample_chains(spec: &ModelSpec, cfg: &ChainConfig, seeds: &[u64]) -> Result<Vec<ChainResult>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let c = ChainConfig {
                seed,
                ..cfg.clone()
            };
            sample_chain(spec, &c)
        })
        .collect()
}

fn state_count(s: usize, n: usize, limit: usize) -> Result<usize> {
    let mut total: usize = 1;
    for _ in 0..n {
        total = total.saturating_mul(s);
        if total > limit {
            return Err(Error::Size(format!(
                "{s}^{n} configurations exceed the limit of {limit}"
            )));
        }
    }
    Ok(total)
}

/// Exact finite-n quantities by enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactReport {
    /// `n^-1 log E_{mu^n} exp(n theta U_n + B sum X_i)`.
    pub z_n: f64,
    pub mean_magnetization: f64,
    pub mean_abs_magnetization: f64,
    /// Exact mean of `v U_n`, the Hamiltonian statistic.
    pub mean_hamiltonian_stat: f64,
    pub mean_alternating_contrast: f64,
    /// Law of `U_n` as `(value, probability)`, values within 1e-12 merged.
    pub u_law: Vec<(f64, f64)>,
}

/// Enumerates every configuration of a small system.
pub fn exact_small_n(spec: &ModelSpec) -> Result<ExactReport> {
    let mu = &spec.site_measure;
    let s = mu.len();
    state_count(s, spec.n, MAX_ENUMERATION)?;
    let n = spec.n;
    let pts = mu.points();
    let lw = mu.log_weights();
    let alt = alternating_weights(n);
    let mut x = vec![0.0; n];
    let mut logs = Vec::new();
    let mut us = Vec::new();
    let mut mags = Vec::new();
    let mut alts = Vec::new();
    let mut failure = None;
    for_each_tuple(s, n, |idx| {
        if failure.is_some() {
            return;
        }
        let mut base = 0.0;
        for (xi, &a) in x.iter_mut().zip(idx) {
            *xi = pts[a];
            base += lw[a];
        }
        match hamiltonian(spec, &x) {
            Ok(u) => {
                logs.push(base + n as f64 * spec.theta * u);
                us.push(u);
                mags.push(x.iter().sum::<f64>() / n as f64);
                alts.push(alt.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>() / n as f64);
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let lse = log_sum_exp(&logs);
    let probs: Vec<f64> = logs.iter().map(|l| (l - lse).exp()).collect();
    let expect = |vals: &[f64]| vals.iter().zip(&probs).map(|(v, p)| v * p).sum::<f64>();
    let abs_mags: Vec<f64> = mags.iter().map(|m| m.abs()).collect();
    let mut order: Vec<usize> = (0..us.len()).collect();
    order.sort_by(|&a, &b| us[a].total_cmp(&us[b]));
    let mut u_law: Vec<(f64, f64)> = Vec::new();
    for j in order {
        match u_law.last_mut() {
            Some((u, p)) if (us[j] - *u).abs() <= LAW_MERGE_TOL => *p += probs[j],
            _ => u_law.push((us[j], probs[j])),
        }
    }
    Ok(ExactReport {
        z_n: spec.mu.log_mgf(spec.field) + lse / n as f64,
        mean_magnetization: expect(&mags),
        mean_abs_magnetization: expect(&abs_mags),
        mean_hamiltonian_stat: spec.v() as f64 * expect(&us),
        mean_alternating_contrast: expect(&alts),
        u_law,
    })
}

fn decode(mut idx: usize, s: usize, n: usize, pts: &[f64], out: &mut [f64]) {
    for slot in out.iter_mut().take(n).rev() {
        *slot = pts[idx % s];
        idx /= s;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    pub tv: f64,
    /// Largest deviation of a transition-matrix row sum from one.
    pub row_sum_error: f64,
    pub stationary: Vec<f64>,
    pub gibbs: Vec<f64>,
}

/// Total-variation gap between the random-scan Glauber stationary law and the
/// exact Gibbs law.
pub fn exact_glauber_stationarity(spec: &ModelSpec) -> Result<StationarityReport> {
    let mu = &spec.site_measure;
    let s = mu.len();
    let n = spec.n;
    let total = state_count(s, n, MAX_CHAIN_STATES)?;
    let pts = mu.points();
    let mut p = DMatrix::<f64>::zeros(total, total);
    let mut x = vec![0.0; n];
    let mut gibbs_log = Vec::with_capacity(total);
    let mut stride = vec![1usize; n];
    for i in (0..n.saturating_sub(1)).rev() {
        stride[i] = stride[i + 1] * s;
    }
    for state in 0..total {
        decode(state, s, n, pts, &mut x);
        let base: f64 = x
            .iter()
            .map(|xi| mu.log_weights()[pts.iter().position(|p| p == xi).expect("atom")])
            .sum();
        gibbs_log.push(base + n as f64 * spec.theta * hamiltonian(spec, &x)?);
        for i in 0..n {
            let m = local_field(spec, &x, i)?;
            let cond = conditional_probs(spec, m);
            let cur = (state / stride[i]) % s;
            for (a, pa) in cond.iter().enumerate() {
                let target = state - cur * stride[i] + a * stride[i];
                p[(state, target)] += pa / n as f64;
            }
        }
    }
    let row_sum_error = (0..total)
        .map(|r| (p.row(r).sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let mut a = p.transpose() - DMatrix::<f64>::identity(total, total);
    for c in 0..total {
        a[(total - 1, c)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(total);
    rhs[total - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Diagnostic("transition matrix has no unique stationary law".into()))?;
    let lse = log_sum_exp(&gibbs_log);
    let gibbs: Vec<f64> = gibbs_log.iter().map(|l| (l - lse).exp()).collect();
    let tv = 0.5
        * pi
            .iter()
            .zip(&gibbs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    Ok(StationarityReport {
        tv,
        row_sum_error,
        stationary: pi.iter().copied().collect(),
        gibbs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationReport {
    pub z_original: f64,
    pub z_permuted: f64,
    pub z_gap: f64,
    /// Largest gap between matched atoms of the two laws of `U_n`, in value or probability.
    pub law_gap: f64,
    pub law_sizes: (usize, usize),
}

/// Compares exact `Z_n` and the law of `U_n` before and after relabelling sites.
///
/// Block models are rebuilt at `n_small` sites; dense couplings must already have that size.
pub fn permutation_invariance_check(spec: &ModelSpec, perm: &[usize], n_small: usize) -> Result<PermutationReport> {
    state_count(spec.site_measure.len(), n_small, MAX_PERMUTATION_STATES)?;
    let small = if spec.n == n_small {
        spec.clone()
    } else {
        match &spec.coupling {
            Coupling::Block { kernel, .. } => ModelSpec::block(
                spec.motif.clone(),
                kernel.clone(),
                n_small,
                spec.mu.clone(),
                spec.theta,
                spec.field,
            )?,
            Coupling::Dense(_) => {
                return Err(Error::Size(format!(
                    "dense coupling has n={} but n_small={n_small}",
                    spec.n
                )))
            }
        }
    };
    let permuted = small.permuted(perm)?;
    let a = exact_small_n(&small)?;
    let b = exact_small_n(&permuted)?;
    let law_gap = if a.u_law.len() == b.u_law.len() {
        a.u_law
            .iter()
            .zip(&b.u_law)
            .map(|(x, y)| (x.0 - y.0).abs().max((x.1 - y.1).abs()))
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    Ok(PermutationReport {
        z_original: a.z_n,
        z_permuted: b.z_n,
        z_gap: (a.z_n - b.z_n).abs(),
        law_gap,
        law_sizes: (a.u_law.len(), b.u_law.len()),
    })
}
