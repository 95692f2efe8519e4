//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain
//! binary (`harness = false`); `ACCEPTANCE_ONLY=3,4` restricts the run.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use geospar::geometry::{check_spectral_sparsifier, DenseLaplacian, KernelFunction, PointSet};
use geospar::projection::make_sketch_pair;
use geospar::quadtree::CompressedQuadTree;
use geospar::sampling::{rand_sample, resample_fast};
use geospar::sketches::{approximation_audit, MultiplyState, SketchConfig, SolveState};
use geospar::sparsifier::{DynamicGeoSpar, FullyDynamicSparsifier, SparsifierConfig};
use geospar::ujl::{check_estimates, upper_distortion, worst_point, EstimateCheck, UltraJlStore, DEFAULT_UPPER_C};
use geospar::wspd::Wspd;
use geospar_cli::commands::cmd_bench;
use geospar_cli::RunConfig;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const EPS: f64 = 0.5;
const DELTA: f64 = 0.05;
const SEEDS: u64 = 20;

type Change = (Vec<usize>, Vec<usize>, Vec<usize>, Vec<usize>);
type Criterion = (usize, &'static str, u64, fn() -> Verdict);

struct Verdict {
    passed: bool,
    detail: String,
}

fn exp_kernel() -> KernelFunction {
    KernelFunction::by_name("exp").unwrap()
}

fn config(seed: u64) -> SparsifierConfig {
    SparsifierConfig { delta: DELTA, ..SparsifierConfig::desk(EPS, seed) }
}

fn points(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

/// Kernel graph Laplacian straight from raw coordinates.
fn kernel_laplacian(raw: &[Vec<f64>]) -> DenseLaplacian {
    let k = exp_kernel();
    let n = raw.len();
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let t: f64 = raw[i].iter().zip(&raw[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            edges.push((i, j, k.profile(t)));
        }
    }
    DenseLaplacian::from_edges(n, edges)
}

fn spectral_ok(raw: &[Vec<f64>], lh: &DenseLaplacian) -> bool {
    check_spectral_sparsifier(&kernel_laplacian(raw), lh, EPS).unwrap().passed
}

fn criterion_1() -> Verdict {
    let mut parts = Vec::new();
    let mut passed = true;
    for n in [64, 128, 256] {
        let mut ok = 0;
        for seed in 0..SEEDS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = points(n, 4, &mut rng);
            let dgs = DynamicGeoSpar::initialize(PointSet::normalize(&raw).unwrap(), exp_kernel(), config(seed)).unwrap();
            ok += spectral_ok(&raw, &dgs.get_laplacian()) as usize;
        }
        passed &= ok >= 19;
        parts.push(format!("n={n}: {ok}/20"));
    }
    Verdict { passed, detail: parts.join(", ") }
}

/// Spectral checks every `stride` moves; returns (passed, total).
fn dynamic_run(n: usize, moves: usize, stride: usize, seed: u64, wrapper: bool) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let mut raw = points(n, 4, &mut rng);
    let ps = PointSet::normalize(&raw).unwrap();
    let (mut ok, mut total) = (0, 0);
    if wrapper {
        let mut fds = FullyDynamicSparsifier::new(ps, exp_kernel(), config(seed)).unwrap();
        let budget = fds.rebuild_budget();
        let mut expected_rebuilds = 0;
        for step in 1..=moves {
            let i = rng.random_range(0..n);
            let z: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let (_, rebuilt) = fds.update(i, &z).unwrap();
            raw[i] = z;
            if step % budget == 0 {
                expected_rebuilds += 1;
                assert!(rebuilt, "rebuild expected after update {step}");
            } else {
                assert!(!rebuilt, "unexpected rebuild after update {step}");
            }
            assert_eq!(fds.counter(), step % budget);
            assert_eq!(fds.rebuilds(), expected_rebuilds);
            assert_eq!(fds.total_updates(), step);
            if step % stride == 0 {
                total += 1;
                ok += spectral_ok(&raw, &fds.get_laplacian()) as usize;
            }
        }
    } else {
        let mut dgs = DynamicGeoSpar::initialize(ps, exp_kernel(), config(seed)).unwrap();
        for step in 1..=moves {
            let i = rng.random_range(0..n);
            let z: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            dgs.update(i, &z).unwrap();
            raw[i] = z;
            if step % stride == 0 {
                total += 1;
                ok += spectral_ok(&raw, &dgs.get_laplacian()) as usize;
            }
        }
    }
    (ok, total)
}

fn criterion_2() -> Verdict {
    let (mut ok, mut total) = (0, 0);
    for seed in 0..SEEDS {
        let (a, b) = dynamic_run(128, 100, 10, seed, false);
        ok += a;
        total += b;
    }
    Verdict { passed: ok * 10 >= total * 9, detail: format!("n=128, {ok}/{total} checkpoints") }
}

fn criterion_3() -> Verdict {
    let n = 200;
    let mut exact = 0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let pts = points(n, 3, &mut rng);
        let mut tree = CompressedQuadTree::build(3, pts.iter().enumerate().map(|(i, p)| (i, p.as_slice()))).unwrap();
        let mut wspd = Wspd::compute(&tree);
        let mut same = true;
        for step in 1..=500 {
            let i = rng.random_range(0..n);
            let z: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            wspd.move_point(&mut tree, i, &z).unwrap();
            if step % 100 == 0 {
                same &= wspd.pairs() == Wspd::compute(&tree).pairs();
            }
        }
        exact += same as usize;
    }
    Verdict { passed: exact == SEEDS as usize, detail: format!("n=200, 500 moves, {exact}/20 seeds equal") }
}

fn criterion_4() -> Verdict {
    let r = |lo: usize, hi: usize| (lo..hi).collect::<Vec<usize>>();
    // (A, B) -> (A', B') with |A' x B'| in 12..=24
    let grid: Vec<Change> = vec![
        (r(0, 3), r(10, 14), vec![0, 1, 5], r(10, 14)),
        (r(0, 3), r(10, 15), r(0, 4), r(10, 15)),
        (r(0, 4), r(10, 16), r(0, 4), r(10, 15)),
        (r(0, 4), r(10, 14), vec![0, 1, 2, 7], r(10, 16)),
    ];
    let trials = 50_000;
    let (mut worst_p, mut worst_tv) = (1.0f64, 0.0f64);
    let mut passed = true;
    for (c, (a, b, a2, b2)) in grid.iter().enumerate() {
        for s in [4, 6, 8] {
            let mut rng = ChaCha8Rng::seed_from_u64(3000 + 10 * c as u64 + s as u64);
            let mut index = HashMap::new();
            for &i in a2 {
                for &j in b2 {
                    let len = index.len();
                    index.insert((i, j), len);
                }
            }
            let mut got = vec![0u64; index.len()];
            let mut direct = vec![0u64; index.len()];
            for _ in 0..trials {
                let old = rand_sample(a, b, s, &mut rng);
                for e in &resample_fast(&old, a, b, a2, b2, s, &mut rng).0.edges {
                    got[index[e]] += 1;
                }
                for e in &rand_sample(a2, b2, s, &mut rng).edges {
                    direct[index[e]] += 1;
                }
            }
            let expected = (trials * s) as f64 / index.len() as f64;
            let stat: f64 = got.iter().map(|&g| (g as f64 - expected).powi(2) / expected).sum();
            let p = 1.0 - ChiSquared::new((index.len() - 1) as f64).unwrap().cdf(stat);
            let norm = (trials * s) as f64;
            let tv = 0.5 * got.iter().zip(&direct).map(|(&g, &d)| (g as f64 - d as f64).abs() / norm).sum::<f64>();
            passed &= p > 1e-3 && tv <= 0.02;
            worst_p = worst_p.min(p);
            worst_tv = worst_tv.max(tv);
        }
    }
    Verdict { passed, detail: format!("12 grid cases, min chi-square p = {worst_p:.4}, max TV = {worst_tv:.4}") }
}

fn criterion_5() -> Verdict {
    let n = 256;
    let mut ratios = Vec::new();
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        let raw = points(n, 4, &mut rng);
        let mut dgs = DynamicGeoSpar::initialize(PointSet::normalize(&raw).unwrap(), exp_kernel(), config(seed)).unwrap();
        for _ in 0..100 {
            let i = rng.random_range(0..n);
            let z: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            dgs.update(i, &z).unwrap();
            let changed = dgs.get_diff().len();
            ratios.push(changed as f64 / dgs.graph().len() as f64);
        }
    }
    ratios.sort_by(f64::total_cmp);
    let median = ratios[ratios.len() / 2];
    let under = ratios.iter().filter(|&&r| r < 0.05).count() as f64 / ratios.len() as f64;
    Verdict {
        passed: median < 0.05 && under >= 0.95,
        detail: format!("n=256, median churn {:.2}% of |H|, {:.1}% of updates under 5%", 100.0 * median, 100.0 * under),
    }
}

fn laplacian_matrix(edges: impl Iterator<Item = (usize, usize, f64)>, n: usize) -> DMatrix<f64> {
    DenseLaplacian::from_edges(n, edges).matrix
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let s = a.norm().max(b.norm());
    if s == 0.0 {
        0.0
    } else {
        (a - b).norm() / s
    }
}

fn criterion_6() -> Verdict {
    let n = 64;
    let mut worst = 0.0f64;
    let mut ok = 0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
        let raw = points(n, 4, &mut rng);
        let sk = SketchConfig::new(EPS, DELTA, seed);
        let v0: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let b0: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut mul = MultiplyState::init(PointSet::normalize(&raw).unwrap(), exp_kernel(), &v0, config(seed), sk).unwrap();
        let mut sol = SolveState::init(PointSet::normalize(&raw).unwrap(), exp_kernel(), &b0, config(seed), sk).unwrap();
        let (mut v, mut b) = (DVector::from_vec(v0), DVector::from_vec(b0));
        for _ in 0..50 {
            match rng.random_range(0..3) {
                0 => {
                    let j = rng.random_range(0..n);
                    let x: f64 = rng.sample(StandardNormal);
                    mul.update_v(&[(j, x)]).unwrap();
                    v[j] += x;
                }
                1 => {
                    let j = rng.random_range(0..n);
                    let x: f64 = rng.sample(StandardNormal);
                    sol.update_b(&[(j, x)]).unwrap();
                    b[j] += x;
                }
                _ => {
                    let i = rng.random_range(0..n);
                    let z: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
                    mul.update_g(i, &z).unwrap();
                    sol.update_g(i, &z).unwrap();
                }
            }
        }
        let (phi, psi) = make_sketch_pair(n, sk.eps, sk.delta, sk.c_sk, sk.seed).unwrap();
        let lt = phi.matrix() * laplacian_matrix(mul.sparsifier().graph().edges(), n) * psi.matrix().transpose();
        let e_mul = rel(&(&lt * (psi.matrix() * &v)), &mul.query());
        let lt = phi.matrix() * laplacian_matrix(sol.sparsifier().graph().edges(), n) * psi.matrix().transpose();
        let svd = lt.svd(true, true);
        let cutoff = 1e-10 * svd.singular_values.max();
        let e_sol = rel(&(svd.pseudo_inverse(cutoff).unwrap() * (phi.matrix() * &b)), &sol.query());
        let e = e_mul.max(e_sol);
        worst = worst.max(e);
        ok += (e <= 1e-6) as usize;
    }
    Verdict { passed: ok == SEEDS as usize, detail: format!("n=64, {ok}/20 seeds, max relative error {worst:.2e}") }
}

fn criterion_7() -> Verdict {
    let n = 64;
    let (mut mul_ok, mut sol_ok) = (0, 0);
    let (mut worst_m, mut worst_s) = (0.0f64, 0.0f64);
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(6000 + seed);
        let raw = points(n, 4, &mut rng);
        let dgs = DynamicGeoSpar::initialize(PointSet::normalize(&raw).unwrap(), exp_kernel(), config(seed)).unwrap();
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut b: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mean = b.iter().sum::<f64>() / n as f64;
        b.iter_mut().for_each(|x| *x -= mean);
        let audit = approximation_audit(&kernel_laplacian(&raw), &dgs.get_laplacian(), &v, &b, EPS).unwrap();
        mul_ok += (audit.multiply_error <= EPS) as usize;
        sol_ok += (audit.solve_error <= 2.0 * EPS / (1.0 - EPS)) as usize;
        worst_m = worst_m.max(audit.multiply_error);
        worst_s = worst_s.max(audit.solve_error);
    }
    Verdict {
        passed: mul_ok >= 19 && sol_ok >= 19,
        detail: format!(
            "n=64, multiply {mul_ok}/20 (max {worst_m:.3} vs {EPS}), solve {sol_ok}/20 (max {worst_s:.3} vs {:.3})",
            2.0 * EPS / (1.0 - EPS)
        ),
    }
}

fn criterion_8() -> Verdict {
    let (n, d) = (1024, 10);
    let mut ok_seeds = 0;
    let (mut iid, mut adv) = (EstimateCheck::default(), EstimateCheck::default());
    let add = |acc: &mut EstimateCheck, c: EstimateCheck| {
        acc.below += c.below;
        acc.above += c.above;
        acc.total += c.total;
    };
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let pts = points(n, d, &mut rng);
        let store = UltraJlStore::init(pts.clone(), 0.1, seed).unwrap();
        let upper = upper_distortion(n, store.k(), DEFAULT_UPPER_C);
        let mut per_seed = EstimateCheck::default();
        for _ in 0..100 {
            let q: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let u = store.query(&q).unwrap();
            add(&mut per_seed, check_estimates(&store, &q, &u, upper));
        }
        ok_seeds += (per_seed.failure_rate() <= 2.0 / n as f64) as usize;
        add(&mut iid, per_seed);
        // adversary: the next query is the currently worst-estimated point
        let mut q: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        for _ in 0..100 {
            let u = store.query(&q).unwrap();
            add(&mut adv, check_estimates(&store, &q, &u, upper));
            q = pts[worst_point(&store, &q, &u, upper).unwrap()].clone();
        }
    }
    let (ri, ra) = (iid.failure_rate(), adv.failure_rate());
    Verdict {
        passed: ok_seeds >= 27 && ra <= 2.0 * ri,
        detail: format!("n=1024, d=10, {ok_seeds}/30 seeds within 2/n, i.i.d. rate {ri:.2e}, adversarial rate {ra:.2e}"),
    }
}

fn criterion_9() -> Verdict {
    let (mut ok, mut total) = (0, 0);
    for seed in 0..SEEDS {
        let (a, b) = dynamic_run(64, 128, 10, seed, true);
        ok += a;
        total += b;
    }
    Verdict {
        passed: ok * 10 >= total * 9,
        detail: format!("n=64, 128 updates, {ok}/{total} checkpoints, rebuild bookkeeping exact"),
    }
}

fn criterion_10() -> Verdict {
    let cfg = RunConfig {
        eps: EPS,
        allow_large_eps: true,
        bench_sizes: vec![128, 256, 512],
        bench_updates: 100,
        bench_runs: 3,
        seed: 7,
        ..RunConfig::default()
    };
    let out = cmd_bench(None, &cfg).unwrap();
    let rows = out.report["timing"]["rows"].as_array().unwrap();
    let ratios: Vec<f64> = rows.iter().map(|r| r["ratio"].as_f64().unwrap()).collect();
    let decreasing = ratios.windows(2).all(|w| w[1] < w[0]);
    Verdict {
        passed: decreasing,
        detail: format!(
            "update/rebuild ratio {}",
            ratios.iter().zip([128, 256, 512]).map(|(r, n)| format!("n={n}: {r:.4}")).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [Criterion; 10] = [
        (1, "spectral sparsifier after init", 60, criterion_1),
        (2, "dynamic maintenance", 300, criterion_2),
        (3, "decomposition oracle equality", 60, criterion_3),
        (4, "resampling uniformity", 120, criterion_4),
        (5, "churn per update", 60, criterion_5),
        (6, "sketch exactness", 120, criterion_6),
        (7, "unsketched approximation audit", 120, criterion_7),
        (8, "distance estimation guarantee", 120, criterion_8),
        (9, "fully dynamic wrapper", 120, criterion_9),
        (10, "sub-linear update trend", 300, criterion_10),
    ];
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let v = run();
        let elapsed = t.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let pass = v.passed && in_time;
        failed += !pass as usize;
        println!(
            "criterion {id:>2} {name}: {} ({}; {:.1} s of {limit} s)",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
