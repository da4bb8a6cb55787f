use multigibbs_core::meanfield::*;
use multigibbs_core::{BaseMeasure, FieldProfile, MotifGraph, StepKernel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Root of `t = tanh(2 theta t + b)` with the sign of `b` (positive branch when `b = 0`).
fn tanh_root(theta: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (1e-12, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid < (2.0 * theta * mid + b).tanh() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn binary_rate(x: f64) -> f64 {
    let p: f64 = 0.5 * (1.0 + x);
    let q = 1.0 - p;
    let term = |a: f64| if a > 0.0 { a * (2.0 * a).ln() } else { 0.0 };
    term(p) + term(q)
}

#[test]
fn scalar_objective_values() {
    let mu = BaseMeasure::ising_pm1();
    assert_eq!(scalar_objective(&mu, 0.0, 0.0, 2, 0.0).unwrap(), 0.0);
    let h = scalar_objective(&mu, 1.0, 0.0, 2, 0.5).unwrap();
    assert!((h - (0.25 - binary_rate(0.5))).abs() < 1e-13);
    assert!((h - 0.1192).abs() < 1e-4);
    let edge = scalar_objective(&mu, 1.0, 0.0, 2, 1.0).unwrap();
    assert!((edge - (1.0 - 2f64.ln())).abs() < 1e-15);
    assert!(scalar_objective(&mu, 1.0, 0.0, 2, 1.1).is_err());
}

#[test]
fn curie_weiss_maximizers() {
    let mu = BaseMeasure::ising_pm1();
    let opts = ScalarOptions::default();
    let low = scalar_maximizers(&mu, 0.3, 0.0, 2, &opts).unwrap();
    assert_eq!(low.len(), 1);
    assert!(low.optimizers[0].x.abs() < 1e-7);

    let t = tanh_root(1.0, 0.0);
    let high = scalar_maximizers(&mu, 1.0, 0.0, 2, &opts).unwrap();
    let mut pts = high.points();
    pts.sort_by(f64::total_cmp);
    assert_eq!(pts.len(), 2);
    assert!((pts[0] + t).abs() < 1e-7 && (pts[1] - t).abs() < 1e-7);
    assert!((t - 0.957_504_0).abs() < 1e-7);
    for o in &high.optimizers {
        assert!(o.residual <= 1e-8);
    }

    let field = scalar_maximizers(&mu, 1.0, 0.2, 2, &opts).unwrap();
    assert_eq!(field.len(), 1);
    assert!((field.optimizers[0].x - tanh_root(1.0, 0.2)).abs() < 1e-7);
}

#[test]
fn fixed_point_sets() {
    let mu = BaseMeasure::ising_pm1();
    let trivial = scalar_fixed_points(&mu, 0.0, 0.0, 2);
    assert_eq!(trivial.len(), 1);
    assert!(trivial[0].x.abs() < 1e-12);

    let t = tanh_root(1.0, 0.0);
    let fps = scalar_fixed_points(&mu, 1.0, 0.0, 2);
    assert_eq!(fps.len(), 3);
    assert!((fps[0].x + t).abs() < 1e-10 && fps[0].stable);
    assert!(fps[1].x.abs() < 1e-10 && !fps[1].stable);
    assert!((fps[2].x - t).abs() < 1e-10 && fps[2].stable);

    let coin = BaseMeasure::bernoulli(0.5).unwrap();
    let f = scalar_fixed_points(&coin, 0.0, 0.0, 2);
    assert_eq!(f.len(), 1);
    assert!((f[0].x - 0.5).abs() < 1e-12);
}

#[test]
fn quadratic_trichotomy() {
    let mu = BaseMeasure::ising_pm1();
    let sub = quadratic_case(&mu, 0.4, 0.0).unwrap();
    assert_eq!(sub.case, QuadraticCase::Subcritical);
    assert!(sub.consistent && sub.t == 0.0);
    let sup = quadratic_case(&mu, 1.0, 0.0).unwrap();
    assert_eq!(sup.case, QuadraticCase::Supercritical);
    assert!(sup.consistent && (sup.t - 0.9575).abs() < 1e-4);
    let fld = quadratic_case(&mu, 1.0, -0.3).unwrap();
    assert_eq!(fld.case, QuadraticCase::Field);
    assert!(fld.consistent && fld.t < 0.0);

    let three = BaseMeasure::new(vec![-1.0, 0.0, 1.0], vec![0.25, 0.5, 0.25]).unwrap();
    let below = quadratic_case(&three, 0.95, 0.0).unwrap();
    let above = quadratic_case(&three, 1.05, 0.0).unwrap();
    assert!((below.threshold_theta - 1.0).abs() < 1e-14);
    assert_eq!(below.case, QuadraticCase::Subcritical);
    assert_eq!(above.case, QuadraticCase::Supercritical);
    assert!(below.consistent && above.consistent);

    let biased = BaseMeasure::bernoulli(0.4).unwrap();
    assert!(quadratic_case(&biased, 1.0, 0.0).is_err());
}

#[test]
fn critical_couplings() {
    let ising = critical_theta(&BaseMeasure::ising_pm1(), 2, &CriticalOptions::default()).unwrap();
    assert!((ising.theta_c - 0.5).abs() < 1e-6);
    let three = BaseMeasure::new(vec![-1.0, 0.0, 1.0], vec![0.25, 0.5, 0.25]).unwrap();
    let expect = 0.5 / three.tilt_var(0.0);
    let r = critical_theta(&three, 2, &CriticalOptions::default()).unwrap();
    assert!((r.theta_c - expect).abs() < 1e-6);
}

#[test]
fn uniqueness_threshold_signs() {
    let mu = BaseMeasure::ising_pm1();
    let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let r = uniqueness_field(&mu, 1.0, 2, &grid).unwrap();
    let b0 = r.b0.unwrap();
    assert!(b0 > 0.0 && b0 < 1.0);
    let last = &r.table.last().unwrap().1;
    assert_eq!(last.len(), 1);
    assert!((last.optimizers[0].x - tanh_root(1.0, 1.0)).abs() < 1e-7);
    let wide = BaseMeasure::new(vec![-2.0, 2.0], vec![0.5, 0.5]).unwrap();
    assert!(uniqueness_field(&wide, 1.0, 2, &grid).is_err());
}

fn tripartite_instance() -> (MotifGraph, StepKernel, BaseMeasure) {
    let mu = BaseMeasure::from_unnormalized(vec![-1.0, 1.0], vec![4f64.exp(), (-4f64).exp()]).unwrap();
    (MotifGraph::complete(3).unwrap(), StepKernel::tripartite(), mu)
}

#[test]
fn tripartite_profile_beats_constants() {
    let (k3, w, mu) = tripartite_instance();
    let p = Problem::new(&k3, &w, &mu, 9.0, 0.0);
    let f = FieldProfile::uniform(vec![-0.99, -0.99, 0.83]).unwrap();
    let reference = profile_objective(&p, &f).unwrap();
    // Constants: 9 * (2/9) t^3 - gamma(beta(t)), scanned densely.
    let best_const = (0..=20_000)
        .map(|j| -1.0 + 2.0 * j as f64 / 20_000.0)
        .map(|t: f64| 2.0 * t.powi(3) - mu.rate_at_mean(t).unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(reference > best_const + 0.1, "profile {reference} vs constant {best_const}");
    let r = replica_symmetry_verdict(&p, &MultistartSpec::default()).unwrap();
    assert_eq!(r.verdict, Verdict::Broken);
    assert!(r.solve.z >= reference);
    assert!((r.best_constant - best_const).abs() < 1e-6);
    assert!(r.solve.optimizers.iter().all(|o| !o.profile.is_constant(1e-6)));
}

#[test]
fn negative_coupling_on_bipartite_kernel() {
    let k2 = MotifGraph::edge();
    let w = StepKernel::bipartite(2.0);
    let mu = BaseMeasure::ising_pm1();
    let p = Problem::new(&k2, &w, &mu, -5.0, 0.0);
    let r = replica_symmetry_verdict(&p, &MultistartSpec::default()).unwrap();
    assert_eq!(r.verdict, Verdict::Broken);
    assert!(!r.conditions.signed_positive);
    let best = &r.solve.optimizers[0];
    let v = best.profile.values();
    assert!(v[0] * v[1] < 0.0);
    // G(f) = f1 f2 on equal halves; with f = (a, -a) the objective is 5 a^2 - gamma(beta(a))
    // and stationarity reads a = tanh(10 a).
    let a = tanh_root(5.0, 0.0);
    let z = 5.0 * a * a - binary_rate(a);
    assert!((r.solve.z - z).abs() < 1e-8);
    assert!(r.solve.z > r.best_constant + 1e-6);
}

#[test]
fn constant_solver_matches_scalar_problem() {
    let k2 = MotifGraph::edge();
    let w = StepKernel::complete();
    let mu = BaseMeasure::ising_pm1();
    for theta in [0.2, 0.7, 1.0, 1.5] {
        let p = Problem::new(&k2, &w, &mu, theta, 0.1);
        let r = solve_free_energy(&p, &MultistartSpec::default()).unwrap();
        let s = scalar_maximizers(&mu, theta, 0.1, 2, &ScalarOptions::default()).unwrap();
        assert!((r.z - s.best_value()).abs() < 1e-9, "theta={theta}");
    }
}

#[test]
fn free_energy_grows_with_theta_for_nonnegative_kernels() {
    let k3 = MotifGraph::cherry();
    let w = StepKernel::new(
        vec![0.3, 0.7],
        vec![vec![1.0, 0.4], vec![0.4, 0.2]],
    )
    .unwrap();
    let mu = BaseMeasure::three_point(0.3).unwrap();
    let spec = MultistartSpec {
        n_random: 16,
        ..Default::default()
    };
    let zs: Vec<f64> = (0..8)
        .map(|j| {
            let p = Problem::new(&k3, &w, &mu, 0.5 * j as f64, 0.0);
            solve_free_energy(&p, &spec).unwrap().z
        })
        .collect();
    assert!(zs.windows(2).all(|z| z[1] >= z[0] - 1e-10), "{zs:?}");
}

#[test]
fn regular_positive_kernels_give_constant_optimizers() {
    let cases = [
        (MotifGraph::edge(), BaseMeasure::ising_pm1()),
        (MotifGraph::complete(3).unwrap(), BaseMeasure::bernoulli(0.4).unwrap()),
    ];
    let w = StepKernel::uniform(vec![
        vec![1.2, 0.4, 0.8],
        vec![0.4, 1.2, 0.8],
        vec![0.8, 0.8, 0.8],
    ])
    .unwrap();
    for (motif, mu) in cases {
        let (regular, _) = w.is_regular(&motif, 1e-12).unwrap();
        if !regular {
            continue;
        }
        let p = Problem::new(&motif, &w, &mu, 1.3, 0.0);
        let r = replica_symmetry_verdict(&p, &MultistartSpec::default()).unwrap();
        assert!(r.conditions.all());
        assert_eq!(r.verdict, Verdict::Symmetric);
        for o in &r.solve.optimizers {
            assert!(o.profile.is_constant(1e-6));
        }
    }
}

#[test]
fn directional_derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let motif = MotifGraph::complete(3).unwrap();
    let w = StepKernel::new(
        vec![0.25, 0.35, 0.4],
        vec![vec![0.2, 1.0, -0.5], vec![1.0, 0.3, 0.6], vec![-0.5, 0.6, 0.9]],
    )
    .unwrap();
    let mu = BaseMeasure::three_point(0.4).unwrap();
    let p = Problem::new(&motif, &w, &mu, 2.0, 0.3);
    for _ in 0..20 {
        let vals: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let dir: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = FieldProfile::new(w.masses().to_vec(), vals.clone()).unwrap();
        let g = profile_gradient(&p, &f).unwrap();
        let analytic: f64 = (0..3).map(|b| w.masses()[b] * dir[b] * g.values()[b]).sum();
        let h = 1e-5;
        let at = |s: f64| {
            let v = vals.iter().zip(&dir).map(|(x, d)| x + s * d).collect();
            profile_objective(&p, &FieldProfile::new(w.masses().to_vec(), v).unwrap()).unwrap()
        };
        let numeric = (at(h) - at(-h)) / (2.0 * h);
        assert!(
            (analytic - numeric).abs() <= 1e-6 * analytic.abs().max(1.0),
            "{analytic} vs {numeric}"
        );
    }
}
