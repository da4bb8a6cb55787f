//! One pipeline per subcommand. Each returns its tables and the assertions it evaluated.

use anyhow::{bail, Context, Result};
use multigibbs_core::empirics::{build_limit_sets, distance_to_set, empirical_of_fields, lp_profile_distance, BlOptions};
use multigibbs_core::meanfield::{
    critical_theta, profile_fixed_point, profile_objective, replica_symmetry_verdict, scalar_fixed_points,
    scalar_maximizers, solve_free_energy, stationarity_residual, CriticalOptions, FreeEnergyReport,
    IterationOptions, MultistartSpec, Problem, ScalarOptions,
};
use multigibbs_core::sampler::{batch_means, exact_small_n, sample_chains, ChainConfig, ChainResult, Statistic};
use multigibbs_core::{BaseMeasure, ExtendedReal, FieldProfile, MotifGraph, StepKernel};

use crate::config::ExperimentConfig;
use crate::output::{Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Tilt,
    SolveScalar,
    SolveProfile,
    FreeEnergy,
    PhaseScan,
    CriticalTheta,
    Sample,
    WeakLaw,
    ExactSmallN,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Tilt => "tilt",
            Command::SolveScalar => "solve-scalar",
            Command::SolveProfile => "solve-profile",
            Command::FreeEnergy => "free-energy",
            Command::PhaseScan => "phase-scan",
            Command::CriticalTheta => "critical-theta",
            Command::Sample => "sample",
            Command::WeakLaw => "weak-law",
            Command::ExactSmallN => "exact-small-n",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Tables keyed by file stem, plus assertion outcomes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub tables: Vec<(String, Table)>,
    pub plots: Vec<(String, Table)>,
    pub checks: Vec<Check>,
}

impl Report {
    fn table(&mut self, name: &str, t: Table) {
        self.tables.push((name.to_string(), t));
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn merge(&mut self, other: Report) {
        self.tables.extend(other.tables);
        self.plots.extend(other.plots);
        self.checks.extend(other.checks);
    }

    /// Writes every table as `<stem>.csv` and plot data as `<stem>.dat`.
    pub fn write(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, t) in &self.tables {
            crate::output::emit_csv(t, &dir.join(format!("{name}.csv")))?;
        }
        for (name, t) in &self.plots {
            crate::output::emit_plotdata(t, &dir.join(format!("{name}.dat")))?;
        }
        let mut checks = Table::new(&["check", "passed", "detail"]);
        for c in &self.checks {
            checks.push(vec![c.name.as_str().into(), c.passed.into(), c.detail.replace(',', ";").into()]);
        }
        crate::output::emit_csv(&checks, &dir.join("checks.csv"))
    }
}

pub fn run(cmd: Command, cfg: &ExperimentConfig) -> Result<Report> {
    match cmd {
        Command::Tilt => tilt(cfg, 512),
        Command::SolveScalar => solve_scalar(cfg),
        Command::SolveProfile => solve_profile(cfg),
        Command::FreeEnergy => free_energy(cfg),
        Command::PhaseScan => phase_scan(cfg),
        Command::CriticalTheta => critical(cfg),
        Command::Sample => sample(cfg),
        Command::WeakLaw => weak_law(cfg),
        Command::ExactSmallN => exact_convergence(cfg),
    }
}

pub fn multistart(cfg: &ExperimentConfig) -> MultistartSpec {
    let s = &cfg.solver;
    MultistartSpec {
        n_random: s.n_random,
        constant_grid: s.constant_grid,
        seed: cfg.seed,
        iteration: IterationOptions {
            damping: s.damping,
            max_iter: s.max_iter,
            tol: s.tol,
        },
        value_tol: s.value_tol,
        dedup_tol: s.dedup_tol,
        residual_tol: s.residual_tol,
        cap: s.cap,
    }
}

struct Inputs {
    mu: BaseMeasure,
    motif: MotifGraph,
    kernel: StepKernel,
}

fn inputs(cfg: &ExperimentConfig) -> Result<Inputs> {
    Ok(Inputs {
        mu: cfg.measure()?,
        motif: cfg.motif_graph()?,
        kernel: cfg.step_kernel()?,
    })
}

fn ext(x: ExtendedReal) -> f64 {
    x.to_f64()
}

/// `beta`, the rate and the round-trip error on an interior grid of the support hull.
pub fn tilt(cfg: &ExperimentConfig, points: usize) -> Result<Report> {
    let mu = cfg.measure()?;
    let (lo, hi) = (mu.support_min(), mu.support_max());
    let mut t = Table::new(&["x", "beta", "alpha_prime_of_beta", "roundtrip_error", "rate"]);
    let mut worst = 0.0f64;
    let mut min_rate = f64::INFINITY;
    for i in 0..points {
        let x = lo + (hi - lo) * (i as f64 + 0.5) / points as f64;
        let b = ext(mu.inverse_mean(x)?);
        let back = mu.tilt_mean(b);
        let rate = mu.rate_at_mean(x)?;
        worst = worst.max((back - x).abs());
        min_rate = min_rate.min(rate);
        t.push(vec![x.into(), b.into(), back.into(), (back - x).abs().into(), rate.into()]);
    }
    for x in [lo, hi] {
        t.push(vec![
            x.into(),
            ext(mu.inverse_mean(x)?).into(),
            x.into(),
            0.0.into(),
            mu.rate_at_mean(x)?.into(),
        ]);
    }
    let at_mean = mu.rate_at_mean(mu.tilt_mean(0.0))?;
    let mut r = Report::default();
    r.table("tilt", t);
    r.check("tilt_roundtrip", worst <= 1e-10, format!("max |alpha'(beta(x)) - x| = {worst:.3e}"));
    r.check("rate_nonnegative", min_rate >= -1e-12, format!("min rate = {min_rate:.3e}"));
    r.check("rate_zero_at_mean", at_mean.abs() <= 1e-12, format!("rate at mean = {at_mean:.3e}"));
    Ok(r)
}

pub fn solve_scalar(cfg: &ExperimentConfig) -> Result<Report> {
    let inp = inputs(cfg)?;
    let v = inp.motif.v();
    let g1 = inp.kernel.hom_functional(&inp.motif, &FieldProfile::constant_on(inp.kernel.masses(), 1.0))?;
    let coupling = cfg.theta * g1;
    let rep = scalar_maximizers(&inp.mu, coupling, cfg.field, v, &ScalarOptions::default())?;
    let mut t = Table::new(&["kind", "theta", "B", "coupling", "x", "value", "residual", "stable"]);
    for o in &rep.optimizers {
        t.push(vec![
            "maximizer".into(),
            cfg.theta.into(),
            cfg.field.into(),
            coupling.into(),
            o.x.into(),
            o.value.into(),
            o.residual.into(),
            "".into(),
        ]);
    }
    for fp in scalar_fixed_points(&inp.mu, coupling, cfg.field, v) {
        let value = multigibbs_core::meanfield::scalar_objective(&inp.mu, coupling, cfg.field, v, fp.x)?;
        t.push(vec![
            "fixed_point".into(),
            cfg.theta.into(),
            cfg.field.into(),
            coupling.into(),
            fp.x.into(),
            value.into(),
            fp.map_slope.into(),
            fp.stable.into(),
        ]);
    }
    let mut r = Report::default();
    let worst = rep.optimizers.iter().map(|o| o.residual).fold(0.0, f64::max);
    r.check(
        "scalar_maximizers_stationary",
        worst <= 1e-8,
        format!("{} maximizers, max residual {worst:.3e}", rep.len()),
    );
    r.table("scalar", t);
    Ok(r)
}

fn starting_profile(cfg: &ExperimentConfig, inp: &Inputs) -> Result<FieldProfile> {
    Ok(match &cfg.profile {
        Some(vals) => FieldProfile::new(inp.kernel.masses().to_vec(), vals.clone())?,
        None => FieldProfile::constant_on(inp.kernel.masses(), inp.mu.tilt_mean(cfg.field)),
    })
}

pub fn solve_profile(cfg: &ExperimentConfig) -> Result<Report> {
    let inp = inputs(cfg)?;
    let p = Problem::new(&inp.motif, &inp.kernel, &inp.mu, cfg.theta, cfg.field);
    let f0 = starting_profile(cfg, &inp)?;
    let run = profile_fixed_point(&p, &f0, &multistart(cfg).iteration)?;
    let th = inp.kernel.vartheta_profile(&inp.motif, &run.profile)?;
    let mut t = Table::new(&["block", "mass", "start", "value", "vartheta"]);
    for b in 0..run.profile.k() {
        t.push(vec![
            b.into(),
            run.profile.masses()[b].into(),
            f0.value_at(mass_mid(run.profile.masses(), b)).into(),
            run.profile.values()[b].into(),
            th.values()[b].into(),
        ]);
    }
    let mut s = Table::new(&["theta", "B", "objective", "residual", "iterations", "converged"]);
    s.push(vec![
        cfg.theta.into(),
        cfg.field.into(),
        run.objective.into(),
        run.residual.into(),
        run.iterations.into(),
        run.converged.into(),
    ]);
    let mut r = Report::default();
    r.check(
        "profile_converged",
        run.converged && run.residual <= cfg.solver.residual_tol,
        format!("residual {:.3e} after {} iterations", run.residual, run.iterations),
    );
    r.table("profile", t);
    r.table("profile_summary", s);
    Ok(r)
}

fn mass_mid(masses: &[f64], b: usize) -> f64 {
    masses[..b].iter().sum::<f64>() + 0.5 * masses[b]
}

/// Shared stationarity assertion: every emitted optimizer must satisfy the fixed-point equation.
fn optimizer_residual_check(r: &mut Report, p: &Problem, solve: &FreeEnergyReport, tol: f64, label: &str) -> Result<()> {
    let mut worst = 0.0f64;
    for o in &solve.optimizers {
        worst = worst.max(stationarity_residual(p, &o.profile)?);
    }
    r.check(
        &format!("{label}optimizer_residuals"),
        !solve.optimizers.is_empty() && worst <= tol,
        format!("{} optimizers, max residual {worst:.3e}", solve.optimizers.len()),
    );
    Ok(())
}

pub fn free_energy(cfg: &ExperimentConfig) -> Result<Report> {
    let inp = inputs(cfg)?;
    let p = Problem::new(&inp.motif, &inp.kernel, &inp.mu, cfg.theta, cfg.field);
    let ms = multistart(cfg);
    let sym = replica_symmetry_verdict(&p, &ms)?;
    let solve = &sym.solve;

    let mut opt = Table::new(&["rank", "block", "mass", "value", "objective", "residual", "iterations"]);
    for (rank, o) in solve.optimizers.iter().enumerate() {
        for b in 0..o.profile.k() {
            opt.push(vec![
                rank.into(),
                b.into(),
                o.profile.masses()[b].into(),
                o.profile.values()[b].into(),
                o.objective.into(),
                o.residual.into(),
                o.iterations.into(),
            ]);
        }
    }
    let max_residual = solve.optimizers.iter().map(|o| o.residual).fold(0.0, f64::max);
    let mut s = Table::new(&[
        "theta",
        "B",
        "Z",
        "n_optimizers",
        "best_constant",
        "best_nonconstant",
        "max_residual",
        "verdict",
        "regular",
        "signed_positive",
        "parity_or_nonneg",
        "truncated",
    ]);
    s.push(vec![
        cfg.theta.into(),
        cfg.field.into(),
        solve.z.into(),
        solve.optimizers.len().into(),
        sym.best_constant.into(),
        sym.best_nonconstant.unwrap_or(f64::NAN).into(),
        max_residual.into(),
        sym.verdict.as_str().into(),
        sym.conditions.regular.into(),
        sym.conditions.signed_positive.into(),
        sym.conditions.parity_or_nonneg.into(),
        solve.truncated.into(),
    ]);

    let mut r = Report::default();
    optimizer_residual_check(&mut r, &p, solve, cfg.solver.residual_tol, "")?;

    if let Some(vals) = &cfg.profile {
        let f = FieldProfile::new(inp.kernel.masses().to_vec(), vals.clone())?;
        let obj = profile_objective(&p, &f)?;
        let gap = obj - sym.best_constant;
        let mut g = Table::new(&["profile_objective", "best_constant", "gap"]);
        g.push(vec![obj.into(), sym.best_constant.into(), gap.into()]);
        r.table("profile_gap", g);
        if cfg.checks.profile_beats_constants == Some(true) {
            r.check(
                "profile_beats_constants",
                gap > 0.0,
                format!("profile {obj:.10} vs best constant {:.10}, gap {gap:.6e}", sym.best_constant),
            );
        }
    }
    if let Some(want) = &cfg.checks.verdict {
        r.check(
            "verdict",
            sym.verdict.as_str() == want,
            format!("verdict {} (expected {want})", sym.verdict.as_str()),
        );
    }
    if cfg.checks.opposite_signs == Some(true) {
        let best = solve.optimizers.first().context("no optimizer found")?;
        let vals = best.profile.values();
        let signs = vals.iter().any(|&x| x > 1e-9) && vals.iter().any(|&x| x < -1e-9);
        let margin = best.objective - sym.best_constant;
        r.check(
            "opposite_signs",
            signs && margin > 1e-6,
            format!("best profile {vals:?}, margin over constants {margin:.6e}"),
        );
    }
    r.table("free_energy", s);
    r.table("optimizers", opt);
    Ok(r)
}

fn theta_grid(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let sc = &cfg.scan;
    if sc.steps == 0 {
        bail!("phase scan needs at least one step");
    }
    if sc.steps == 1 {
        return Ok(vec![sc.theta_min]);
    }
    Ok((0..sc.steps)
        .map(|i| sc.theta_min + (sc.theta_max - sc.theta_min) * i as f64 / (sc.steps - 1) as f64)
        .collect())
}

pub fn phase_scan(cfg: &ExperimentConfig) -> Result<Report> {
    let inp = inputs(cfg)?;
    let ms = multistart(cfg);
    let v = inp.motif.v();
    let g1 = inp.kernel.hom_functional(&inp.motif, &FieldProfile::constant_on(inp.kernel.masses(), 1.0))?;
    let mut t = Table::new(&[
        "theta",
        "B",
        "Z",
        "n_optimizers",
        "best_constant",
        "max_abs_integral",
        "max_residual",
        "verdict",
        "n_scalar_maximizers",
        "scalar_maximizers",
    ]);
    let mut counts = Vec::new();
    let mut worst_residual = 0.0f64;
    for theta in theta_grid(cfg)? {
        let p = Problem::new(&inp.motif, &inp.kernel, &inp.mu, theta, cfg.field);
        let sym = replica_symmetry_verdict(&p, &ms)?;
        let solve = &sym.solve;
        let scalar = scalar_maximizers(&inp.mu, theta * g1, cfg.field, v, &ScalarOptions::default())?;
        let max_res = solve.optimizers.iter().map(|o| o.residual).fold(0.0, f64::max);
        worst_residual = worst_residual.max(max_res);
        let max_int = solve
            .optimizers
            .iter()
            .map(|o| o.profile.integral().abs())
            .fold(0.0, f64::max);
        let pts: Vec<String> = scalar.points().iter().map(|x| format!("{x:.16e}")).collect();
        counts.push((theta, scalar.len()));
        t.push(vec![
            theta.into(),
            cfg.field.into(),
            solve.z.into(),
            solve.optimizers.len().into(),
            sym.best_constant.into(),
            max_int.into(),
            max_res.into(),
            sym.verdict.as_str().into(),
            scalar.len().into(),
            Cell::Text(pts.join(";")),
        ]);
    }
    let mut r = Report::default();
    r.check(
        "scan_optimizer_residuals",
        worst_residual <= cfg.solver.residual_tol,
        format!("max residual over the scan {worst_residual:.3e}"),
    );
    if let Some(at) = cfg.checks.transition_at {
        let bad: Vec<f64> = counts
            .iter()
            .filter(|(th, c)| (*th < at - 1e-9 && *c != 1) || (*th > at + 1e-9 && *c != 2))
            .map(|(th, _)| *th)
            .collect();
        r.check(
            "transition",
            bad.is_empty(),
            format!("one maximizer below {at} and two above; violations at {bad:?}"),
        );
    }
    r.plots.push(("phase_scan".into(), t.clone()));
    r.table("phase_scan", t);
    Ok(r)
}

pub fn critical(cfg: &ExperimentConfig) -> Result<Report> {
    let mu = cfg.measure()?;
    let v = match cfg.critical.v {
        Some(v) => v,
        None => cfg.motif_graph()?.v(),
    };
    let opts = CriticalOptions {
        bracket: (cfg.critical.bracket[0], cfg.critical.bracket[1]),
        tol: cfg.critical.tol,
        ..Default::default()
    };
    let rep = critical_theta(&mu, v, &opts)?;
    let mut t = Table::new(&["v", "theta_c", "lo", "hi", "iterations"]);
    t.push(vec![v.into(), rep.theta_c.into(), rep.lo.into(), rep.hi.into(), rep.iterations.into()]);
    let mut scan = Table::new(&["theta", "zero_optimal"]);
    for (th, z) in &rep.scan {
        scan.push(vec![(*th).into(), (*z).into()]);
    }
    let mut r = Report::default();
    if let Some(want) = cfg.checks.theta_c {
        let tol = cfg.checks.theta_c_tol.unwrap_or(1e-6);
        r.check(
            "theta_c",
            (rep.theta_c - want).abs() <= tol,
            format!("theta_c = {:.10} (expected {want} +/- {tol:e})", rep.theta_c),
        );
    }
    r.table("critical", t);
    r.table("critical_scan", scan);
    Ok(r)
}

/// Limit targets for the sampler: means and Hamiltonian limits of every optimizer.
struct Targets {
    optimizers: Vec<FieldProfile>,
    means: Vec<f64>,
    hams: Vec<f64>,
}

fn targets(cfg: &ExperimentConfig, inp: &Inputs) -> Result<Targets> {
    let p = Problem::new(&inp.motif, &inp.kernel, &inp.mu, cfg.theta, cfg.field);
    let solve = solve_free_energy(&p, &multistart(cfg))?;
    let optimizers: Vec<FieldProfile> = solve.optimizers.iter().map(|o| o.profile.clone()).collect();
    if optimizers.is_empty() {
        bail!("the solver accepted no optimizer");
    }
    let v = inp.motif.v() as f64;
    let means = optimizers.iter().map(|f| f.integral()).collect();
    let hams = optimizers
        .iter()
        .map(|f| Ok(v * inp.kernel.hom_functional(&inp.motif, f)?))
        .collect::<Result<_>>()?;
    Ok(Targets {
        optimizers,
        means,
        hams,
    })
}

fn nearest_gap(x: f64, targets: &[f64]) -> f64 {
    targets.iter().map(|t| (x - t).abs()).fold(f64::INFINITY, f64::min)
}

fn series(chain: &ChainResult, stat: &str) -> Vec<f64> {
    chain.rows.iter().filter(|r| r.stat == stat).map(|r| r.value).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean across independent replicates.
fn replicate_se(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64 / xs.len() as f64).sqrt()
}

pub fn sample(cfg: &ExperimentConfig) -> Result<Report> {
    let inp = inputs(cfg)?;
    let spec = cfg.model(cfg.sampler.n)?;
    let mut stats = cfg.statistics()?;
    for need in [Statistic::Magnetization, Statistic::HamiltonianStat] {
        if !stats.contains(&need) {
            stats.push(need);
        }
    }
    let chain_cfg = ChainConfig {
        sweeps: cfg.sampler.sweeps,
        burn_in: cfg.sampler.burn_in,
        thin: cfg.sampler.thin,
        seed: cfg.seed,
        scan: cfg.scan_order()?,
        stats,
        snapshot_every: None,
    };
    let seeds = cfg.sampler_seeds();
    let chains = sample_chains(&spec, &chain_cfg, &seeds)?;
    let mut r = Report::default();
    let mut summary = Table::new(&["seed", "stat", "mean", "batch_se", "count"]);
    for c in &chains {
        let mut trace = Table::new(&["sweep", "stat", "value", "batch_se"]);
        for row in &c.rows {
            let se = c.summary(&row.stat).map_or(f64::NAN, |s| s.batch_se);
            trace.push(vec![row.sweep.into(), row.stat.as_str().into(), row.value.into(), se.into()]);
        }
        r.table(&format!("trace_seed{}", c.seed), trace);
        for s in &c.summaries {
            summary.push(vec![
                c.seed.into(),
                s.stat.as_str().into(),
                s.mean.into(),
                s.batch_se.into(),
                s.count.into(),
            ]);
        }
    }

    if cfg.checks.sample_mag_tol.is_some() || cfg.checks.sample_ham_tol.is_some() {
        let tg = targets(cfg, &inp)?;
        let mut lim = Table::new(&["seed", "statistic", "value", "batch_se"]);
        let mut mag_gaps = Vec::new();
        let mut ham_gaps = Vec::new();
        for c in &chains {
            let g: Vec<f64> = series(c, "mag").iter().map(|&x| nearest_gap(x, &tg.means)).collect();
            let h = c.summary("ham").context("ham summary")?;
            let (gm, gse) = batch_means(&g, 16);
            let hg = nearest_gap(h.mean, &tg.hams);
            lim.push(vec![c.seed.into(), "mag_gap".into(), gm.into(), gse.into()]);
            lim.push(vec![c.seed.into(), "ham_gap".into(), hg.into(), h.batch_se.into()]);
            mag_gaps.push(gm);
            ham_gaps.push(hg);
        }
        r.table("sample_limits", lim);
        if let Some(tol) = cfg.checks.sample_mag_tol {
            let worst = mag_gaps.iter().copied().fold(0.0, f64::max);
            r.check(
                "sample_magnetization",
                worst <= tol,
                format!("long-run mean distance to nearest optimizer mean {worst:.5} (tol {tol}); targets {:?}", tg.means),
            );
        }
        if let Some(tol) = cfg.checks.sample_ham_tol {
            let worst = ham_gaps.iter().copied().fold(0.0, f64::max);
            r.check(
                "sample_hamiltonian",
                worst <= tol,
                format!("hamiltonian statistic gap {worst:.5} (tol {tol}); targets {:?}", tg.hams),
            );
        }
    }
    let audit = chains.iter().map(|c| c.audit_max).fold(0.0, f64::max);
    r.check("power_sum_audit", audit <= 1e-8, format!("max incremental drift {audit:.3e}"));
    r.table("sample_summary", summary);
    Ok(r)
}

/// Aggregated weak-law values at one system size.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakLawRow {
    pub n: usize,
    pub mag_gap: (f64, f64),
    pub contrast: (f64, f64),
    pub ham_gap: (f64, f64),
    pub distance: (f64, f64),
    pub lp: (f64, f64),
}

pub fn weak_law_rows(cfg: &ExperimentConfig) -> Result<Vec<WeakLawRow>> {
    let inp = inputs(cfg)?;
    let wl = &cfg.weak_law;
    if wl.snapshot_every == 0 {
        bail!("snapshot_every must be positive");
    }
    let tg = targets(cfg, &inp)?;
    let sets = build_limit_sets(&tg.optimizers, &inp.motif, &inp.kernel, &inp.mu, cfg.theta, cfg.field)?;
    let mut out = Vec::new();
    for &n in &wl.sizes {
        let spec = cfg.model(n)?;
        let chain_cfg = ChainConfig {
            sweeps: wl.sweeps,
            burn_in: wl.burn_in,
            thin: 1,
            seed: cfg.seed,
            scan: cfg.scan_order()?,
            stats: vec![
                Statistic::Magnetization,
                Statistic::AlternatingContrast,
                Statistic::HamiltonianStat,
            ],
            snapshot_every: Some(wl.snapshot_every),
        };
        let chains = sample_chains(&spec, &chain_cfg, &wl.seeds)?;
        let (mut mg, mut ct, mut hg, mut dist, mut lp) = (vec![], vec![], vec![], vec![], vec![]);
        for c in &chains {
            let g: Vec<f64> = series(c, "mag").iter().map(|&x| nearest_gap(x, &tg.means)).collect();
            mg.push(mean(&g));
            let a: Vec<f64> = series(c, "contrast_alt").iter().map(|x| x.abs()).collect();
            ct.push(mean(&a));
            hg.push(nearest_gap(mean(&series(c, "ham")), &tg.hams));
            let mut d = Vec::new();
            let mut l = Vec::new();
            for (k, snap) in c.snapshots.iter().enumerate() {
                let opts = BlOptions {
                    subsample: wl.subsample,
                    repeats: wl.repeats,
                    seed: c.seed.wrapping_mul(1_000_003).wrapping_add(k as u64),
                };
                let emp = empirical_of_fields(&snap.m)?;
                d.push(distance_to_set(&emp, &sets.b_star, n, &opts)?.distance);
                let cond: Vec<f64> = snap
                    .m
                    .iter()
                    .map(|m| spec.site_measure().tilt_mean(cfg.theta * m))
                    .collect();
                l.push(lp_profile_distance(&cond, &tg.optimizers, wl.p_prime)?.0);
            }
            if d.is_empty() {
                bail!("no snapshots recorded; increase sweeps or reduce snapshot_every");
            }
            dist.push(mean(&d));
            lp.push(mean(&l));
        }
        let agg = |xs: &[f64]| (mean(xs), replicate_se(xs));
        out.push(WeakLawRow {
            n,
            mag_gap: agg(&mg),
            contrast: agg(&ct),
            ham_gap: agg(&hg),
            distance: agg(&dist),
            lp: agg(&lp),
        });
    }
    Ok(out)
}

pub fn weak_law(cfg: &ExperimentConfig) -> Result<Report> {
    let rows = weak_law_rows(cfg)?;
    weak_law_report(cfg, &rows)
}

pub fn weak_law_report(cfg: &ExperimentConfig, rows: &[WeakLawRow]) -> Result<Report> {
    let wl = &cfg.weak_law;
    let estimator = format!("matching_l1_trunc2_sub{}_rep{}", wl.subsample, wl.repeats);
    let mut t = Table::new(&["n", "statistic", "distance_to_set", "lp_profile_distance", "se", "estimator"]);
    for row in rows {
        let blank = f64::NAN;
        for (name, (val, se)) in [
            ("mag_gap", row.mag_gap),
            ("abs_contrast_alt", row.contrast),
            ("ham_gap", row.ham_gap),
        ] {
            t.push(vec![row.n.into(), name.into(), val.into(), blank.into(), se.into(), estimator.as_str().into()]);
        }
        t.push(vec![
            row.n.into(),
            "local_field_law".into(),
            row.distance.0.into(),
            row.lp.0.into(),
            row.distance.1.into(),
            estimator.as_str().into(),
        ]);
    }
    let mut r = Report::default();
    let last = rows.last().context("no system sizes configured")?;
    let c = &cfg.checks;
    if let Some(tol) = c.weak_mag_tol {
        r.check("weak_magnetization", last.mag_gap.0 <= tol, format!("n={} gap {:.5} (tol {tol})", last.n, last.mag_gap.0));
    }
    if let Some(tol) = c.weak_contrast_tol {
        r.check("weak_contrast", last.contrast.0 <= tol, format!("n={} |contrast| {:.5} (tol {tol})", last.n, last.contrast.0));
    }
    if let Some(tol) = c.weak_ham_tol {
        r.check("weak_hamiltonian", last.ham_gap.0 <= tol, format!("n={} gap {:.5} (tol {tol})", last.n, last.ham_gap.0));
    }
    if c.weak_distance_decreasing == Some(true) {
        let d: Vec<f64> = rows.iter().map(|x| x.distance.0).collect();
        r.check(
            "weak_distance_decreasing",
            d.windows(2).all(|w| w[1] < w[0]),
            format!("seed-averaged distances {d:?}"),
        );
    }
    if let Some(tol) = c.weak_lp_tol {
        r.check("weak_lp_profile", last.lp.0 <= tol, format!("n={} lp distance {:.5} (tol {tol})", last.n, last.lp.0));
    }
    r.plots.push(("weak_law".into(), t.clone()));
    r.table("weak_law", t);
    Ok(r)
}

pub fn exact_convergence(cfg: &ExperimentConfig) -> Result<Report> {
    let inp = inputs(cfg)?;
    let p = Problem::new(&inp.motif, &inp.kernel, &inp.mu, cfg.theta, cfg.field);
    let solve = solve_free_energy(&p, &multistart(cfg))?;
    let z = solve.z;
    let mut t = Table::new(&["n", "z_n", "z", "gap", "mean_mag", "mean_abs_mag", "mean_ham_stat"]);
    let mut gaps = Vec::new();
    for n in cfg.exact.n_min..=cfg.exact.n_max {
        let rep = exact_small_n(&cfg.model(n)?)?;
        let gap = (rep.z_n - z).abs();
        gaps.push(gap);
        t.push(vec![
            n.into(),
            rep.z_n.into(),
            z.into(),
            gap.into(),
            rep.mean_magnetization.into(),
            rep.mean_abs_magnetization.into(),
            rep.mean_hamiltonian_stat.into(),
        ]);
    }
    let mut r = Report::default();
    if let Some(tol) = cfg.checks.exact_final_gap {
        let last = *gaps.last().context("empty size range")?;
        r.check("exact_final_gap", last <= tol, format!("|Z_n - Z| = {last:.6} at n={} (tol {tol})", cfg.exact.n_max));
    }
    if cfg.checks.exact_gap_decreasing == Some(true) {
        r.check(
            "exact_gap_decreasing",
            gaps.windows(2).all(|w| w[1] <= w[0]),
            format!("gaps {gaps:?}"),
        );
    }
    r.plots.push(("exact".into(), t.clone()));
    r.table("exact", t);
    Ok(r)
}
