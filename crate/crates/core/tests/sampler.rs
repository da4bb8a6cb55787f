use multigibbs_core::meanfield::{scalar_maximizers, ScalarOptions};
use multigibbs_core::sampler::*;
use multigibbs_core::{BaseMeasure, CouplingMatrix, MotifGraph, StepKernel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_coupling(rng: &mut ChaCha8Rng, n: usize) -> CouplingMatrix {
    let mut e = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let w = rng.gen_range(-1.0..1.5);
            e[i][j] = w;
            e[j][i] = w;
        }
    }
    CouplingMatrix::new(e).unwrap()
}

/// `U_n` straight from the definition: sum over all v-tuples, skipping repeats,
/// averaging the motif product over every vertex relabelling.
fn oracle_u(q: &CouplingMatrix, motif: &MotifGraph, x: &[f64]) -> f64 {
    let n = x.len();
    let v = motif.v();
    let perms: Vec<Vec<usize>> = {
        let mut out = vec![vec![]];
        for k in 0..v {
            out = out
                .into_iter()
                .flat_map(|p: Vec<usize>| {
                    (0..=p.len()).map(move |pos| {
                        let mut q = p.clone();
                        q.insert(pos, k);
                        q
                    })
                })
                .collect();
        }
        out
    };
    let mut total = 0.0;
    for code in 0..n.pow(v as u32) {
        let mut c = code;
        let t: Vec<usize> = (0..v)
            .map(|_| {
                let d = c % n;
                c /= n;
                d
            })
            .collect();
        let mut sorted = t.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            continue;
        }
        let sym: f64 = perms
            .iter()
            .map(|s| {
                motif
                    .edges()
                    .iter()
                    .map(|&(a, b)| q.get(t[s[a]], t[s[b]]))
                    .product::<f64>()
            })
            .sum::<f64>()
            / perms.len() as f64;
        total += sym * t.iter().map(|&i| x[i]).product::<f64>();
    }
    total / (n as f64).powi(v as i32)
}

#[test]
fn hamiltonian_matches_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for motif in [MotifGraph::edge(), MotifGraph::cherry(), MotifGraph::complete(3).unwrap()] {
        let q = random_coupling(&mut rng, 6);
        let mu = BaseMeasure::three_point(0.2).unwrap();
        let spec = ModelSpec::dense(motif.clone(), q.clone(), mu, 1.0, 0.0).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1i32..=1) as f64).collect();
        assert!((hamiltonian(&spec, &x).unwrap() - oracle_u(&q, &motif, &x)).abs() < 1e-13);
    }
}

#[test]
fn hamiltonian_stat_is_v_times_u_exhaustively() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mu = BaseMeasure::ising_pm1();
    for (motif, sizes) in [
        (MotifGraph::edge(), vec![2usize, 5, 8, 10]),
        (MotifGraph::complete(3).unwrap(), vec![3, 6, 8]),
        (MotifGraph::cherry(), vec![4, 7]),
    ] {
        for n in sizes {
            let q = random_coupling(&mut rng, n);
            let spec = ModelSpec::dense(motif.clone(), q, mu.clone(), 1.0, 0.0).unwrap();
            let v = motif.v() as f64;
            for code in 0..(1usize << n) {
                let x: Vec<f64> = (0..n)
                    .map(|i| if code >> i & 1 == 1 { 1.0 } else { -1.0 })
                    .collect();
                let u = hamiltonian(&spec, &x).unwrap();
                let s = hamiltonian_stat(&spec, &x).unwrap();
                assert!((s - v * u).abs() < 1e-12, "n={n} code={code}");
            }
        }
    }
}

#[test]
fn block_and_dense_paths_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let kernel = StepKernel::new(
        vec![0.3, 0.3, 0.4],
        vec![vec![0.5, -1.0, 0.3], vec![-1.0, 0.2, 0.9], vec![0.3, 0.9, 1.4]],
    )
    .unwrap();
    for motif in [
        MotifGraph::edge(),
        MotifGraph::complete(3).unwrap(),
        MotifGraph::new(4, &[(1, 2), (2, 3), (3, 4), (4, 1)]).unwrap(),
    ] {
        let n = 17;
        let mu = BaseMeasure::three_point(0.3).unwrap();
        let block = ModelSpec::block(motif.clone(), kernel.clone(), n, mu.clone(), 1.0, 0.0).unwrap();
        let dense = ModelSpec::dense(motif, block.to_dense(), mu, 1.0, 0.0).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1i32..=1) as f64).collect();
        let ub = hamiltonian(&block, &x).unwrap();
        let ud = hamiltonian(&dense, &x).unwrap();
        assert!((ub - ud).abs() < 1e-12);
        let mb = local_fields(&block, &x).unwrap();
        let md = local_fields(&dense, &x).unwrap();
        for (a, b) in mb.iter().zip(&md) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn glauber_is_exact_for_small_systems() {
    for theta in [0.0, 0.5, 1.0] {
        let spec = ModelSpec::dense(
            MotifGraph::edge(),
            CouplingMatrix::complete(3),
            BaseMeasure::ising_pm1(),
            theta,
            0.0,
        )
        .unwrap();
        assert!(exact_glauber_stationarity(&spec).unwrap().tv <= 1e-10);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = ModelSpec::dense(
        MotifGraph::complete(3).unwrap(),
        random_coupling(&mut rng, 5),
        BaseMeasure::three_point(0.3).unwrap(),
        1.7,
        -0.4,
    )
    .unwrap();
    assert!(exact_glauber_stationarity(&spec).unwrap().tv <= 1e-8);
}

#[test]
fn exact_free_energy_approaches_variational_value() {
    let mu = BaseMeasure::ising_pm1();
    let z = scalar_maximizers(&mu, 0.3, 0.0, 2, &ScalarOptions::default())
        .unwrap()
        .best_value();
    assert!(z.abs() < 1e-12);
    let gaps: Vec<f64> = (4..=12)
        .map(|n| {
            let spec = ModelSpec::block(MotifGraph::edge(), StepKernel::complete(), n, mu.clone(), 0.3, 0.0)
                .unwrap();
            (exact_small_n(&spec).unwrap().z_n - z).abs()
        })
        .collect();
    assert!(gaps.windows(2).all(|g| g[1] < g[0]), "{gaps:?}");
    assert!(gaps.last().unwrap() <= &0.05);
}

#[test]
fn relabelled_sites_leave_the_law_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 8;
    let mut e = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let w = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
            e[i][j] = w;
            e[j][i] = w;
        }
    }
    let spec = ModelSpec::dense(
        MotifGraph::edge(),
        CouplingMatrix::new(e).unwrap(),
        BaseMeasure::ising_pm1(),
        0.9,
        0.1,
    )
    .unwrap();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let r = permutation_invariance_check(&spec, &perm, n).unwrap();
    assert!(r.z_gap <= 1e-12);
    assert!(r.law_gap <= 1e-12);
    assert_eq!(r.law_sizes.0, r.law_sizes.1);
}

#[test]
fn trace_rows_and_moment_diagnostics() {
    let spec = ModelSpec::block(
        MotifGraph::edge(),
        StepKernel::complete(),
        64,
        BaseMeasure::ising_pm1(),
        0.0,
        0.0,
    )
    .unwrap();
    let cfg = ChainConfig {
        sweeps: 103,
        burn_in: 10,
        thin: 4,
        seed: 3,
        stats: vec![
            Statistic::Magnetization,
            Statistic::Moments { p: 2.0, q: 2.0 },
        ],
        snapshot_every: Some(31),
        ..Default::default()
    };
    let r = sample_chain(&spec, &cfg).unwrap();
    let per_stat = (103 - 10) / 4;
    assert_eq!(r.rows.len(), 4 * per_stat);
    assert_eq!(r.snapshots.len(), 3);
    for row in r.rows.iter().filter(|r| r.stat == "moment_x") {
        assert_eq!(row.value, 1.0);
    }
    for row in r.rows.iter().filter(|r| r.stat == "moment_mean") {
        assert_eq!(row.value, 0.0);
    }
    let csv = r.trace_csv();
    assert!(csv.starts_with("sweep,stat,value,batch_se\n"));
    assert_eq!(csv.lines().count(), 1 + r.rows.len());
    assert!(sample_chain(&spec, &ChainConfig { burn_in: 200, ..cfg }).is_err());
}

#[test]
fn statistic_names_parse() {
    assert_eq!(Statistic::parse("mag").unwrap(), Statistic::Magnetization);
    assert_eq!(Statistic::parse("contrast:alt").unwrap(), Statistic::AlternatingContrast);
    assert_eq!(
        Statistic::parse("moments:3,1.5").unwrap(),
        Statistic::Moments { p: 3.0, q: 1.5 }
    );
    assert!(Statistic::parse("nope").is_err());
}

#[test]
fn batch_means_of_constant_series() {
    let (m, se) = batch_means(&[2.0; 64], 16);
    assert_eq!((m, se), (2.0, 0.0));
    assert!(batch_means(&[1.0; 8], 16).1.is_nan());
}
