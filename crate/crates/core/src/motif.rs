//! Motif graphs, step kernels and the multilinear functionals built from them.
//!
//! A [`StepKernel`] is a symmetric block-constant function on `[0,1]^2`. Every
//! functional here is an exact finite sum over block tuples weighted by block
//! masses, so there is no sampling error anywhere in this module.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::profile::FieldProfile;

/// Largest supported motif size.
pub const MAX_MOTIF_VERTICES: usize = 6;
/// Largest number of block tuples any exact sum may visit.
pub const MAX_TUPLES: usize = 10_000_000;
/// Largest block count for exact cut norms.
pub const MAX_EXACT_CUT_BLOCKS: usize = 20;
const MASS_TOL: f64 = 1e-12;

/// Finite simple graph `H` patterning the interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct MotifGraph {
    v: usize,
    edges: Vec<(usize, usize)>,
    max_degree: usize,
    /// Distinct relabelled edge sets with their share of the `v!` permutations.
    sym_terms: Vec<(Vec<(usize, usize)>, f64)>,
}

impl MotifGraph {
    /// Builds a motif from 1-based edge labels.
    pub fn new(v: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if v < 2 {
            return Err(Error::InvalidMotif(format!("need at least 2 vertices, got {v}")));
        }
        if v > MAX_MOTIF_VERTICES {
            return Err(Error::InvalidMotif(format!(
                "motifs are limited to {MAX_MOTIF_VERTICES} vertices, got {v}"
            )));
        }
        if edges.is_empty() {
            return Err(Error::InvalidMotif("edge list is empty".into()));
        }
        let mut norm = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == 0 || b == 0 || a > v || b > v {
                return Err(Error::InvalidMotif(format!("edge ({a},{b}) outside 1..{v}")));
            }
            if a == b {
                return Err(Error::InvalidMotif(format!("loop at vertex {a}")));
            }
            let e = (a.min(b) - 1, a.max(b) - 1);
            if norm.contains(&e) {
                return Err(Error::InvalidMotif(format!("duplicate edge ({a},{b})")));
            }
            norm.push(e);
        }
        let mut degree = vec![0usize; v];
        for &(a, b) in &norm {
            degree[a] += 1;
            degree[b] += 1;
        }
        let max_degree = degree.into_iter().max().unwrap_or(0);

        let mut counts: BTreeMap<Vec<(usize, usize)>, usize> = BTreeMap::new();
        let perms = permutations(v);
        for sigma in &perms {
            let mut mapped: Vec<(usize, usize)> = norm
                .iter()
                .map(|&(a, b)| {
                    let (x, y) = (sigma[a], sigma[b]);
                    (x.min(y), x.max(y))
                })
                .collect();
            mapped.sort_unstable();
            *counts.entry(mapped).or_default() += 1;
        }
        let total = perms.len() as f64;
        let sym_terms = counts
            .into_iter()
            .map(|(e, c)| (e, c as f64 / total))
            .collect();
        Ok(Self {
            v,
            edges: norm,
            max_degree,
            sym_terms,
        })
    }

    /// The single edge `K2`.
    pub fn edge() -> Self {
        Self::new(2, &[(1, 2)]).expect("valid preset")
    }

    /// Complete graph on `v` vertices.
    pub fn complete(v: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for a in 1..=v {
            for b in a + 1..=v {
                edges.push((a, b));
            }
        }
        Self::new(v, &edges)
    }

    /// The two-edge star `K_{1,2}` (a path on three vertices).
    pub fn cherry() -> Self {
        Self::new(3, &[(1, 2), (1, 3)]).expect("valid preset")
    }

    pub fn v(&self) -> usize {
        self.v
    }

    /// 0-based edges with `a < b`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// `Sym[W]` at the given 0-based block indices.
    pub fn sym_eval(&self, kernel: &StepKernel, blocks: &[usize]) -> f64 {
        debug_assert_eq!(blocks.len(), self.v);
        self.sym_terms
            .iter()
            .map(|(edges, share)| {
                share
                    * edges
                        .iter()
                        .map(|&(a, b)| kernel.value(blocks[a], blocks[b]))
                        .product::<f64>()
            })
            .sum()
    }

    /// `Sym[|W|]` at the given blocks.
    fn sym_eval_abs(&self, kernel: &StepKernel, blocks: &[usize]) -> f64 {
        self.sym_terms
            .iter()
            .map(|(edges, share)| {
                share
                    * edges
                        .iter()
                        .map(|&(a, b)| kernel.value(blocks[a], blocks[b]).abs())
                        .product::<f64>()
            })
            .sum()
    }
}

fn permutations(v: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(v), &mut vec![false; v], &mut out);
    out
}

/// Calls `f` on every tuple in `0..k` of length `len`, in lexicographic order.
pub(crate) fn for_each_tuple(k: usize, len: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; len];
    if k == 0 {
        return;
    }
    loop {
        f(&idx);
        let mut pos = len;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < k {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn check_tuple_budget(k: usize, len: usize) -> Result<()> {
    let mut total: usize = 1;
    for _ in 0..len {
        total = total.saturating_mul(k);
    }
    if total > MAX_TUPLES {
        return Err(Error::Size(format!(
            "{k}^{len} block tuples exceed the budget of {MAX_TUPLES}"
        )));
    }
    Ok(())
}

/// Symmetric block-constant kernel with arbitrary positive block masses.
#[derive(Debug, Clone, PartialEq)]
pub struct StepKernel {
    masses: Vec<f64>,
    values: Vec<f64>,
}

impl StepKernel {
    pub fn new(masses: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let k = masses.len();
        if k == 0 {
            return Err(Error::InvalidKernel("no blocks".into()));
        }
        validate_masses(&masses)?;
        if values.len() != k || values.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidKernel(format!("values must be {k}x{k}")));
        }
        for a in 0..k {
            for b in 0..k {
                if !values[a][b].is_finite() {
                    return Err(Error::InvalidKernel("kernel values must be finite".into()));
                }
                if values[a][b] != values[b][a] {
                    return Err(Error::InvalidKernel(format!(
                        "values[{a}][{b}] != values[{b}][{a}]"
                    )));
                }
            }
        }
        Ok(Self {
            masses,
            values: values.into_iter().flatten().collect(),
        })
    }

    /// Equal-mass blocks.
    pub fn uniform(values: Vec<Vec<f64>>) -> Result<Self> {
        let k = values.len();
        Self::new(vec![1.0 / k as f64; k], values)
    }

    /// `W == c` on a single block.
    pub fn constant(c: f64) -> Self {
        Self::new(vec![1.0], vec![vec![c]]).expect("valid preset")
    }

    /// Complete graphon `W == 1`.
    pub fn complete() -> Self {
        Self::constant(1.0)
    }

    /// Complete tripartite graphon: zero on the three diagonal thirds, one elsewhere.
    pub fn tripartite() -> Self {
        let v = (0..3)
            .map(|a| (0..3).map(|b| if a == b { 0.0 } else { 1.0 }).collect())
            .collect();
        Self::uniform(v).expect("valid preset")
    }

    /// Two equal halves with value `c` across and zero within.
    pub fn bipartite(c: f64) -> Self {
        Self::uniform(vec![vec![0.0, c], vec![c, 0.0]]).expect("valid preset")
    }

    pub fn k(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    #[inline]
    pub fn value(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.masses.len() + b]
    }

    pub fn row(&self, a: usize) -> &[f64] {
        let k = self.k();
        &self.values[a * k..(a + 1) * k]
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        (0..self.k()).map(|a| self.row(a).to_vec()).collect()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `W > 0` everywhere.
    pub fn is_positive(&self) -> bool {
        self.min_value() > 0.0
    }

    pub fn has_equal_masses(&self) -> bool {
        let m = 1.0 / self.k() as f64;
        self.masses.iter().all(|x| (x - m).abs() <= MASS_TOL)
    }

    fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            masses: self.masses.clone(),
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map_values(|x| c * x)
    }

    pub fn shifted(&self, c: f64) -> Self {
        self.map_values(|x| x + c)
    }

    pub fn abs(&self) -> Self {
        self.map_values(f64::abs)
    }

    /// Relabels blocks: block `a` of the result is block `perm[a]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let k = self.k();
        let mut values = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                values[a * k + b] = self.value(perm[a], perm[b]);
            }
        }
        Self {
            masses: perm.iter().map(|&p| self.masses[p]).collect(),
            values,
        }
    }

    /// Re-expresses the kernel on a finer partition; `map[i]` is the old block of new block `i`.
    pub fn refined(&self, masses: &[f64], map: &[usize]) -> Self {
        let k = masses.len();
        let mut values = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                values[a * k + b] = self.value(map[a], map[b]);
            }
        }
        Self {
            masses: masses.to_vec(),
            values,
        }
    }

    fn weighted(&self) -> Vec<f64> {
        let k = self.k();
        let mut w = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                w[a * k + b] = self.masses[a] * self.masses[b] * self.value(a, b);
            }
        }
        w
    }

    /// `T[Sym[W]]` per block: the `(v-1)`-fold average of `Sym[W]` with one coordinate pinned.
    pub fn degree_profile(&self, motif: &MotifGraph) -> Result<Vec<f64>> {
        let k = self.k();
        let v = motif.v();
        check_tuple_budget(k, v)?;
        let mut out = vec![0.0; k];
        let mut blocks = vec![0usize; v];
        for (b, slot) in out.iter_mut().enumerate() {
            blocks[0] = b;
            let mut acc = 0.0;
            for_each_tuple(k, v - 1, |rest| {
                blocks[1..].copy_from_slice(rest);
                let mass: f64 = rest.iter().map(|&c| self.masses[c]).product();
                acc += mass * motif.sym_eval(self, &blocks);
            });
            *slot = acc;
        }
        Ok(out)
    }

    /// Whether the degree profile is constant within `tol`; returns the mass-weighted mean degree.
    pub fn is_regular(&self, motif: &MotifGraph, tol: f64) -> Result<(bool, f64)> {
        let deg = self.degree_profile(motif)?;
        let lo = deg.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = deg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = deg.iter().zip(&self.masses).map(|(d, m)| d * m).sum();
        Ok((hi - lo <= tol, mean))
    }

    /// `(sum_ab m_a m_b |W_ab|^r)^(1/r)`.
    pub fn lr_norm(&self, r: f64) -> f64 {
        assert!(r >= 1.0, "L^r norm needs r >= 1");
        let k = self.k();
        let mut acc = 0.0;
        for a in 0..k {
            for b in 0..k {
                acc += self.masses[a] * self.masses[b] * self.value(a, b).abs().powf(r);
            }
        }
        acc.powf(1.0 / r)
    }

    /// Exact cut norm by enumerating block subsets `S` with the best `T` per sign.
    pub fn cut_norm_exact(&self) -> Result<f64> {
        let k = self.k();
        if k > MAX_EXACT_CUT_BLOCKS {
            return Err(Error::Size(format!(
                "exact cut norm supports at most {MAX_EXACT_CUT_BLOCKS} blocks, got {k}"
            )));
        }
        let w = self.weighted();
        let mut col = vec![0.0; k];
        let mut best = 0.0f64;
        // Gray code walk over subsets: one row toggles per step
        let mut in_set = vec![false; k];
        for step in 1u64..(1u64 << k) {
            let flip = step.trailing_zeros() as usize;
            let sign = if in_set[flip] { -1.0 } else { 1.0 };
            in_set[flip] = !in_set[flip];
            for (c, wv) in col.iter_mut().zip(&w[flip * k..(flip + 1) * k]) {
                *c += sign * wv;
            }
            let pos: f64 = col.iter().filter(|c| **c > 0.0).sum();
            let neg: f64 = col.iter().filter(|c| **c < 0.0).sum();
            best = best.max(pos).max(-neg);
        }
        Ok(best)
    }

    /// Alternating local search over `(S, T)`; the value is attained by an explicit pair,
    /// so it never exceeds the true cut norm.
    ///
    /// `restarts = 0` runs only the deterministic start `S = [0,1]`.
    pub fn cut_norm_heuristic(&self, restarts: usize, seed: u64) -> f64 {
        let k = self.k();
        let w = self.weighted();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut starts: Vec<Vec<bool>> = vec![vec![true; k]];
        for _ in 0..restarts {
            starts.push((0..k).map(|_| rng.gen_bool(0.5)).collect());
        }
        let mut best = 0.0f64;
        for start in &starts {
            for sign in [1.0, -1.0] {
                best = best.max(alternate(&w, k, start.clone(), sign));
            }
        }
        best
    }

    /// Cut distance after refining both kernels to a common partition.
    pub fn cut_distance(&self, other: &StepKernel) -> Result<f64> {
        let (a, b) = refine(self, other);
        let diff = StepKernel {
            masses: a.masses.clone(),
            values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
        };
        diff.cut_norm_exact()
    }

    /// Minimum cut distance over block relabelings (equal-mass kernels, at most 8 blocks).
    pub fn weak_cut_distance_small(&self, other: &StepKernel) -> Result<f64> {
        let k = self.k();
        if k != other.k() {
            return Err(Error::Unsupported(format!(
                "block counts differ ({k} vs {})",
                other.k()
            )));
        }
        if k > 8 {
            return Err(Error::Unsupported(format!("at most 8 blocks, got {k}")));
        }
        if !self.has_equal_masses() || !other.has_equal_masses() {
            return Err(Error::Unsupported("block masses must be equal".into()));
        }
        let mut best = f64::INFINITY;
        for perm in permutations(k) {
            best = best.min(self.permuted(&perm).cut_distance(other)?);
        }
        Ok(best)
    }

    /// `G_W(f)`: sum over `v`-tuples of blocks of edge products times profile values and masses.
    pub fn hom_functional(&self, motif: &MotifGraph, f: &FieldProfile) -> Result<f64> {
        let (w, vals) = align_profile(self, f);
        w.hom_values(motif, &vals)
    }

    pub(crate) fn hom_values(&self, motif: &MotifGraph, f: &[f64]) -> Result<f64> {
        let k = self.k();
        let v = motif.v();
        check_tuple_budget(k, v)?;
        let mut acc = 0.0;
        for_each_tuple(k, v, |blocks| {
            let mut term = 1.0;
            for &b in blocks {
                term *= self.masses[b] * f[b];
            }
            if term == 0.0 {
                return;
            }
            for &(a, b) in motif.edges() {
                term *= self.value(blocks[a], blocks[b]);
            }
            acc += term;
        });
        Ok(acc)
    }

    /// `vartheta_{W,f}(u) = v * sum over (v-1)-tuples of Sym[W](u, ...) * prod f * prod masses`.
    pub fn vartheta_profile(&self, motif: &MotifGraph, f: &FieldProfile) -> Result<FieldProfile> {
        let (w, vals) = align_profile(self, f);
        let theta = w.vartheta_values(motif, &vals)?;
        Ok(FieldProfile::new_unchecked(w.masses.clone(), theta))
    }

    pub(crate) fn vartheta_values(&self, motif: &MotifGraph, f: &[f64]) -> Result<Vec<f64>> {
        let k = self.k();
        let v = motif.v();
        check_tuple_budget(k, v)?;
        let weights: Vec<f64> = self.masses.iter().zip(f).map(|(m, x)| m * x).collect();
        let mut out = vec![0.0; k];
        let mut blocks = vec![0usize; v];
        for (u, slot) in out.iter_mut().enumerate() {
            blocks[0] = u;
            let mut acc = 0.0;
            for_each_tuple(k, v - 1, |rest| {
                let w: f64 = rest.iter().map(|&c| weights[c]).product();
                if w == 0.0 {
                    return;
                }
                blocks[1..].copy_from_slice(rest);
                acc += w * motif.sym_eval(self, &blocks);
            });
            *slot = v as f64 * acc;
        }
        Ok(out)
    }

    /// `sum_{tuples} prod masses * Sym[|W|]^q`.
    pub fn sym_abs_moment(&self, motif: &MotifGraph, q: f64) -> Result<f64> {
        let k = self.k();
        check_tuple_budget(k, motif.v())?;
        let mut acc = 0.0;
        for_each_tuple(k, motif.v(), |blocks| {
            let mass: f64 = blocks.iter().map(|&b| self.masses[b]).product();
            acc += mass * motif.sym_eval_abs(self, blocks).powf(q);
        });
        Ok(acc)
    }
}

fn alternate(w: &[f64], k: usize, mut s: Vec<bool>, sign: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    loop {
        let mut col = vec![0.0; k];
        for a in (0..k).filter(|&a| s[a]) {
            for (c, wv) in col.iter_mut().zip(&w[a * k..(a + 1) * k]) {
                *c += wv;
            }
        }
        let t: Vec<bool> = col.iter().map(|c| sign * c > 0.0).collect();
        let mut row = vec![0.0; k];
        for (a, r) in row.iter_mut().enumerate() {
            *r = (0..k).filter(|&b| t[b]).map(|b| w[a * k + b]).sum();
        }
        let next: Vec<bool> = row.iter().map(|r| sign * r > 0.0).collect();
        let value: f64 = row
            .iter()
            .zip(&next)
            .filter(|(_, keep)| **keep)
            .map(|(r, _)| sign * r)
            .sum();
        if value <= best + 1e-15 {
            return best.max(0.0);
        }
        best = value;
        s = next;
    }
}

fn validate_masses(masses: &[f64]) -> Result<()> {
    if masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
        return Err(Error::InvalidKernel("block masses must be positive".into()));
    }
    let total: f64 = masses.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::InvalidKernel(format!("block masses sum to {total}")));
    }
    Ok(())
}

/// Common refinement of two block partitions of `[0,1]` (blocks laid out left to right).
///
/// Returns the refined masses and, for each refined block, the index of the
/// containing block in the first and second partition.
pub fn common_partition(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<usize>, Vec<usize>) {
    let cum = |m: &[f64]| -> Vec<f64> {
        let mut acc = 0.0;
        m.iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect()
    };
    let ca = cum(a);
    let cb = cum(b);
    let mut cuts: Vec<f64> = ca.iter().chain(&cb).copied().collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    let mut uniq: Vec<f64> = Vec::new();
    for c in cuts {
        if uniq.last().is_none_or(|l| c - l > MASS_TOL) {
            uniq.push(c);
        }
    }
    // the final cut is 1 up to rounding
    if let Some(last) = uniq.last_mut() {
        *last = 1.0;
    }
    let locate = |cum: &[f64], x: f64| cum.iter().position(|c| x < *c).unwrap_or(cum.len() - 1);
    let mut masses = Vec::with_capacity(uniq.len());
    let mut ia = Vec::with_capacity(uniq.len());
    let mut ib = Vec::with_capacity(uniq.len());
    let mut left = 0.0;
    for &right in &uniq {
        let mid = 0.5 * (left + right);
        masses.push(right - left);
        ia.push(locate(&ca, mid));
        ib.push(locate(&cb, mid));
        left = right;
    }
    (masses, ia, ib)
}

/// Refines two kernels onto their common partition.
pub fn refine(w1: &StepKernel, w2: &StepKernel) -> (StepKernel, StepKernel) {
    if w1.masses == w2.masses {
        return (w1.clone(), w2.clone());
    }
    let (masses, i1, i2) = common_partition(&w1.masses, &w2.masses);
    (w1.refined(&masses, &i1), w2.refined(&masses, &i2))
}

/// Puts a kernel and a profile on one partition; returns the kernel and the profile values.
pub(crate) fn align_profile(w: &StepKernel, f: &FieldProfile) -> (StepKernel, Vec<f64>) {
    let same = w.masses.len() == f.masses().len()
        && w
            .masses
            .iter()
            .zip(f.masses())
            .all(|(a, b)| (a - b).abs() <= MASS_TOL);
    if same {
        return (w.clone(), f.values().to_vec());
    }
    let (masses, iw, iff) = common_partition(&w.masses, f.masses());
    let vals = iff.iter().map(|&j| f.values()[j]).collect();
    (w.refined(&masses, &iw), vals)
}

/// Symmetric real matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl CouplingMatrix {
    pub fn new(entries: Vec<Vec<f64>>) -> Result<Self> {
        let n = entries.len();
        if n == 0 || entries.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidKernel("coupling matrix must be square and non-empty".into()));
        }
        for i in 0..n {
            if entries[i][i] != 0.0 {
                return Err(Error::InvalidKernel(format!("Q({i},{i}) must be zero")));
            }
            for j in 0..n {
                if !entries[i][j].is_finite() || entries[i][j] != entries[j][i] {
                    return Err(Error::InvalidKernel(format!("Q not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self {
            n,
            entries: entries.into_iter().flatten().collect(),
        })
    }

    /// Ones off the diagonal.
    pub fn complete(n: usize) -> Self {
        let e = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect();
        Self::new(e).expect("valid preset")
    }

    /// Quenched Erdos-Renyi adjacency scaled by `1/p`.
    pub fn er_quenched(n: usize, p: f64, seed: u64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidKernel(format!("edge probability {p} not in (0,1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut e = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(p) {
                    e[i][j] = 1.0 / p;
                    e[j][i] = 1.0 / p;
                }
            }
        }
        Self::new(e)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.entries[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }

    /// `Q'(i,j) = Q(perm[i], perm[j])`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                entries[i * n + j] = self.get(perm[i], perm[j]);
            }
        }
        Self { n, entries }
    }

    /// The step kernel `W_Q` with `n` equal blocks.
    pub fn to_kernel(&self) -> StepKernel {
        StepKernel {
            masses: vec![1.0 / self.n as f64; self.n],
            values: self.entries.clone(),
        }
    }

    pub fn cut_norm_heuristic(&self, restarts: usize, seed: u64) -> f64 {
        self.to_kernel().cut_norm_heuristic(restarts, seed)
    }
}

/// `W_Q`: the block kernel of a coupling matrix.
pub fn matrix_to_kernel(q: &CouplingMatrix) -> StepKernel {
    q.to_kernel()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn random_kernel(rng: &mut ChaCha8Rng, k: usize) -> StepKernel {
        let mut masses: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
        let s: f64 = masses.iter().sum();
        masses.iter_mut().for_each(|m| *m /= s);
        let fix = 1.0 - masses[..k - 1].iter().sum::<f64>();
        masses[k - 1] = fix;
        let mut v = vec![vec![0.0; k]; k];
        for a in 0..k {
            for b in a..k {
                let x = rng.gen_range(-1.5..2.0);
                v[a][b] = x;
                v[b][a] = x;
            }
        }
        StepKernel::new(masses, v).unwrap()
    }

    /// Brute-force cut norm over a fine vertex grid of fractional memberships.
    fn cut_norm_vertices(w: &StepKernel) -> f64 {
        let k = w.k();
        let mut best = 0.0f64;
        for s in 0u32..(1 << k) {
            for t in 0u32..(1 << k) {
                let mut acc = 0.0;
                for a in 0..k {
                    for b in 0..k {
                        if s >> a & 1 == 1 && t >> b & 1 == 1 {
                            acc += w.masses()[a] * w.masses()[b] * w.value(a, b);
                        }
                    }
                }
                best = best.max(acc.abs());
            }
        }
        best
    }

    #[test]
    fn motif_validation() {
        assert!(MotifGraph::new(1, &[(1, 1)]).is_err());
        assert!(MotifGraph::new(3, &[]).is_err());
        assert!(MotifGraph::new(3, &[(1, 1)]).is_err());
        assert!(MotifGraph::new(3, &[(1, 2), (2, 1)]).is_err());
        assert!(MotifGraph::new(3, &[(1, 4)]).is_err());
        assert!(MotifGraph::new(7, &[(1, 2)]).is_err());
        let h = MotifGraph::cherry();
        assert_eq!(h.max_degree(), 2);
        assert_eq!(MotifGraph::complete(4).unwrap().edge_count(), 6);
    }

    #[test]
    fn sym_eval_examples() {
        let w = StepKernel::uniform(vec![
            vec![0.3, 1.1, -0.4],
            vec![1.1, 2.0, 0.7],
            vec![-0.4, 0.7, 0.9],
        ])
        .unwrap();
        let k2 = MotifGraph::edge();
        assert!(close(k2.sym_eval(&w, &[0, 2]), -0.4, 1e-15));
        let cherry = MotifGraph::cherry();
        let (w12, w13, w23) = (w.value(0, 1), w.value(0, 2), w.value(1, 2));
        let expect = (w12 * w13 + w12 * w23 + w13 * w23) / 3.0;
        assert!(close(cherry.sym_eval(&w, &[0, 1, 2]), expect, 1e-15));
        let k3 = MotifGraph::complete(3).unwrap();
        let c = StepKernel::constant(0.7);
        assert!(close(k3.sym_eval(&c, &[0, 0, 0]), 0.343, 1e-15));
    }

    #[test]
    fn degree_profile_examples() {
        let w = StepKernel::bipartite(2.0);
        let k2 = MotifGraph::edge();
        assert_eq!(w.degree_profile(&k2).unwrap(), vec![1.0, 1.0]);
        let tri = StepKernel::tripartite();
        let k3 = MotifGraph::complete(3).unwrap();
        for d in tri.degree_profile(&k3).unwrap() {
            assert!(close(d, 2.0 / 9.0, 1e-15));
        }
        for d in StepKernel::complete().degree_profile(&MotifGraph::cherry()).unwrap() {
            assert!(close(d, 1.0, 1e-15));
        }
    }

    #[test]
    fn regularity_examples() {
        let k3 = MotifGraph::complete(3).unwrap();
        let (ok, c) = StepKernel::tripartite().is_regular(&k3, 1e-12).unwrap();
        assert!(ok && close(c, 2.0 / 9.0, 1e-15));
        let (ok, c) = StepKernel::bipartite(2.0).is_regular(&MotifGraph::edge(), 1e-12).unwrap();
        assert!(ok && close(c, 1.0, 1e-15));
        let lop = StepKernel::uniform(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(!lop.is_regular(&MotifGraph::edge(), 1e-12).unwrap().0);
    }

    #[test]
    fn hom_functional_examples() {
        let tri = StepKernel::tripartite();
        let k3 = MotifGraph::complete(3).unwrap();
        let zero = FieldProfile::constant(0.0);
        assert_eq!(tri.hom_functional(&k3, &zero).unwrap(), 0.0);
        let t: f64 = 0.6;
        let g = tri.hom_functional(&k3, &FieldProfile::constant(t)).unwrap();
        assert!(close(g, t.powi(3) * 2.0 / 9.0, 1e-15));
        let g = StepKernel::complete()
            .hom_functional(&MotifGraph::edge(), &FieldProfile::constant(t))
            .unwrap();
        assert!(close(g, t * t, 1e-15));
    }

    #[test]
    fn hom_functional_refines_mismatched_partitions() {
        // profile on (2/3, 1/3) against a kernel on thirds
        let tri = StepKernel::tripartite();
        let k3 = MotifGraph::complete(3).unwrap();
        let f = FieldProfile::new(vec![2.0 / 3.0, 1.0 / 3.0], vec![-0.99, 0.83]).unwrap();
        let g = tri.hom_functional(&k3, &f).unwrap();
        let expect = (2.0 / 9.0) * (-0.99f64) * (-0.99) * 0.83;
        assert!(close(g, expect, 1e-14));
    }

    #[test]
    fn vartheta_examples() {
        let k2 = MotifGraph::edge();
        let w = StepKernel::uniform(vec![vec![0.5, 1.0], vec![1.0, -2.0]]).unwrap();
        let f = FieldProfile::uniform(vec![0.3, -0.8]).unwrap();
        let th = w.vartheta_profile(&k2, &f).unwrap();
        let wf0 = 0.5 * (0.5 * 0.3 + 1.0 * -0.8);
        let wf1 = 0.5 * (1.0 * 0.3 + -2.0 * -0.8);
        assert!(close(th.values()[0], 2.0 * wf0, 1e-15));
        assert!(close(th.values()[1], 2.0 * wf1, 1e-15));
        let zero = w.vartheta_profile(&k2, &FieldProfile::uniform(vec![0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(zero.values(), &[0.0, 0.0]);
        let k3 = MotifGraph::complete(3).unwrap();
        let t: f64 = -0.4;
        let th = StepKernel::tripartite()
            .vartheta_profile(&k3, &FieldProfile::uniform(vec![t; 3]).unwrap())
            .unwrap();
        for x in th.values() {
            assert!(close(*x, 3.0 * (2.0 / 9.0) * t * t, 1e-15));
        }
    }

    #[test]
    fn lr_norm_examples() {
        assert!(close(StepKernel::constant(-1.7).lr_norm(3.0), 1.7, 1e-14));
        assert!(close(StepKernel::bipartite(2.0).lr_norm(2.0), 2f64.sqrt(), 1e-15));
        assert!(close(StepKernel::tripartite().lr_norm(1.0), 2.0 / 3.0, 1e-15));
    }

    #[test]
    fn cut_norm_examples() {
        assert_eq!(StepKernel::constant(0.0).cut_norm_exact().unwrap(), 0.0);
        assert!(close(StepKernel::constant(0.8).cut_norm_exact().unwrap(), 0.8, 1e-15));
        let w = StepKernel::uniform(vec![vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        assert!(close(w.cut_norm_exact().unwrap(), 0.25, 1e-15));
        assert!(close(cut_norm_vertices(&w), 0.25, 1e-15));
        let big = CouplingMatrix::complete(21).to_kernel();
        assert!(matches!(big.cut_norm_exact(), Err(Error::Size(_))));
    }

    #[test]
    fn cut_norm_exact_matches_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in 1..=6 {
            let w = random_kernel(&mut rng, k.max(1));
            let exact = w.cut_norm_exact().unwrap();
            assert!(close(exact, cut_norm_vertices(&w), 1e-13), "k={k}");
            assert!(exact <= w.lr_norm(1.0) + 1e-15);
        }
    }

    #[test]
    fn heuristic_is_a_lower_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 2..=12 {
            let w = random_kernel(&mut rng, k);
            let exact = w.cut_norm_exact().unwrap();
            for restarts in [0, 3, 20] {
                assert!(w.cut_norm_heuristic(restarts, 9) <= exact + 1e-12);
            }
        }
        assert_eq!(StepKernel::constant(0.0).cut_norm_heuristic(5, 1), 0.0);
        let w = random_kernel(&mut rng, 7);
        assert_eq!(w.cut_norm_heuristic(4, 2), w.cut_norm_heuristic(4, 2));
    }

    #[test]
    fn cut_distance_examples() {
        let w = StepKernel::uniform(vec![vec![0.2, 0.9], vec![0.9, -0.3]]).unwrap();
        assert_eq!(w.cut_distance(&w).unwrap(), 0.0);
        assert!(close(w.cut_distance(&w.shifted(0.35)).unwrap(), 0.35, 1e-14));
        let masses = vec![0.25; 4];
        let fine = w.refined(&masses, &[0, 0, 1, 1]);
        assert!(close(w.cut_distance(&fine).unwrap(), 0.0, 1e-15));
        let other = StepKernel::new(vec![0.3, 0.7], vec![vec![1.0, 0.0], vec![0.0, 0.5]]).unwrap();
        let d1 = w.cut_distance(&other).unwrap();
        let d2 = other.cut_distance(&w).unwrap();
        assert!(close(d1, d2, 1e-14) && d1 > 0.0);
    }

    #[test]
    fn weak_cut_distance_examples() {
        let w = StepKernel::uniform(vec![
            vec![0.1, 0.5, 0.9],
            vec![0.5, 0.2, 0.3],
            vec![0.9, 0.3, 0.7],
        ])
        .unwrap();
        let p = w.permuted(&[2, 0, 1]);
        assert!(w.cut_distance(&p).unwrap() > 0.0);
        assert!(close(w.weak_cut_distance_small(&p).unwrap(), 0.0, 1e-15));
        let a = StepKernel::uniform(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let b = StepKernel::uniform(vec![vec![0.0, 0.5], vec![0.5, 0.2]]).unwrap();
        let direct = a.cut_distance(&b).unwrap();
        let swapped = a.permuted(&[1, 0]).cut_distance(&b).unwrap();
        let weak = a.weak_cut_distance_small(&b).unwrap();
        assert!(close(weak, direct.min(swapped), 1e-15));
        assert!(weak <= direct);
        let uneven = StepKernel::new(vec![0.3, 0.7], vec![vec![1.0, 0.0], vec![0.0, 0.5]]).unwrap();
        assert!(matches!(uneven.weak_cut_distance_small(&b), Err(Error::Unsupported(_))));
    }

    #[test]
    fn matrix_kernel_examples() {
        let one = CouplingMatrix::new(vec![vec![0.0]]).unwrap();
        assert_eq!(matrix_to_kernel(&one), StepKernel::constant(0.0));
        let w = matrix_to_kernel(&CouplingMatrix::complete(3));
        assert_eq!(w.k(), 3);
        assert_eq!(w.value(1, 1), 0.0);
        assert_eq!(w.value(0, 2), 1.0);
        let q = CouplingMatrix::er_quenched(9, 0.4, 3).unwrap();
        let direct: f64 = q.rows().iter().flatten().map(|x| x.abs()).sum::<f64>() / 81.0;
        assert!(close(q.to_kernel().lr_norm(1.0), direct, 1e-14));
        assert!(CouplingMatrix::new(vec![vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(CouplingMatrix::new(vec![vec![1.0, 1.0], vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn common_partition_merges_cuts() {
        let (m, a, b) = common_partition(&[0.5, 0.5], &[1.0 / 3.0; 3]);
        assert_eq!(m.len(), 4);
        assert!(close(m.iter().sum::<f64>(), 1.0, 1e-15));
        assert_eq!(a, vec![0, 0, 1, 1]);
        assert_eq!(b, vec![0, 1, 1, 2]);
    }
}
