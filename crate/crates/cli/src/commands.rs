//! Subcommand bodies. Each returns a JSON report plus an overall verdict.

use std::time::Instant;

use geospar::geometry::{check_spectral_sparsifier, dense_laplacian, PointSet, SpectralReport};
use geospar::projection::make_sketch_pair;
use geospar::sketches::{approximation_audit, relative_error, AuditReport, MultiplySketch, SolveSketch};
use geospar::sparsifier::{EdgeDiff, FullyDynamicSparsifier};
use geospar::ujl::{check_estimates, upper_distortion, UltraJlStore, DEFAULT_UPPER_C};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::io::TraceOp;

/// Scratch-equivalence tolerance for the sketch audits.
pub const SKETCH_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub kernel: &'static str,
    pub eps: f64,
    pub seed: u64,
    pub edges: usize,
    pub complete_edges: usize,
    pub pairs: usize,
    pub materialized_pairs: usize,
    pub updates: usize,
    pub rebuilds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectral: Option<SpectralReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub report: Value,
    pub ok: bool,
}

/// A fully-dynamic sparsifier plus lazily created Multiply / Solve sketches
/// that follow its diffs.
pub struct Session {
    pub cfg: RunConfig,
    pub fds: FullyDynamicSparsifier,
    pub multiply: Option<MultiplySketch>,
    pub solve: Option<SolveSketch>,
    pub warning: Option<String>,
}

impl Session {
    pub fn new(raw: &[Vec<f64>], cfg: &RunConfig) -> Result<Self, CliError> {
        let points = PointSet::normalize(raw)?;
        let (spars, warning) = cfg.sparsifier(points.len(), points.dim(), points.aspect_ratio());
        let mut fds = FullyDynamicSparsifier::new(points, cfg.kernel(), spars)?;
        if let Some(b) = cfg.rebuild_budget {
            fds.set_rebuild_budget(b);
        }
        fds.get_diff();
        Ok(Session { cfg: cfg.clone(), fds, multiply: None, solve: None, warning })
    }

    pub fn n(&self) -> usize {
        self.fds.inner().n()
    }

    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.fds.graph().edges().collect()
    }

    fn sketch_pair(&self) -> Result<(geospar::projection::SketchMatrix, geospar::projection::SketchMatrix), CliError> {
        let sk = self.cfg.sketch();
        Ok(make_sketch_pair(self.n(), sk.eps, sk.delta, sk.c_sk, sk.seed)?)
    }

    fn multiply_mut(&mut self) -> Result<&mut MultiplySketch, CliError> {
        if self.multiply.is_none() {
            let (phi, psi) = self.sketch_pair()?;
            let zero = vec![0.0; self.n()];
            self.multiply = Some(MultiplySketch::new(phi, psi, self.edges(), &zero)?);
        }
        Ok(self.multiply.as_mut().expect("just created"))
    }

    fn solve_mut(&mut self) -> Result<&mut SolveSketch, CliError> {
        if self.solve.is_none() {
            let (phi, psi) = self.sketch_pair()?;
            let zero = vec![0.0; self.n()];
            self.solve = Some(SolveSketch::new(phi, psi, self.edges(), &zero)?);
        }
        Ok(self.solve.as_mut().expect("just created"))
    }

    /// Applies one trace op; returns (edges changed, pairs touched, rebuilt).
    pub fn apply(&mut self, op: &TraceOp) -> Result<(usize, usize, bool), CliError> {
        match op {
            TraceOp::Move { i, z } => {
                let (report, rebuilt) = self.fds.update(*i, z)?;
                let diff: Vec<EdgeDiff> = self.fds.get_diff();
                if let Some(m) = self.multiply.as_mut() {
                    m.apply_diff(&diff);
                }
                if let Some(s) = self.solve.as_mut() {
                    s.apply_diff(&diff)?;
                }
                Ok((diff.len(), report.pairs_touched, rebuilt))
            }
            TraceOp::Mulv { nz } => {
                self.multiply_mut()?.update_v(nz)?;
                Ok((0, 0, false))
            }
            TraceOp::Solveb { nz } => {
                self.solve_mut()?.update_b(nz)?;
                Ok((0, 0, false))
            }
        }
    }

    pub fn spectral(&self) -> Result<SpectralReport, CliError> {
        let inner = self.fds.inner();
        let lg = dense_laplacian(inner.points(), inner.kernel());
        Ok(check_spectral_sparsifier(&lg, &self.fds.get_laplacian(), self.cfg.eps)?)
    }

    pub fn summary(&self, verify: bool) -> Result<Summary, CliError> {
        let inner = self.fds.inner();
        let n = inner.n();
        Ok(Summary {
            n,
            d: inner.points().dim(),
            k: inner.k(),
            kernel: inner.kernel().name(),
            eps: self.cfg.eps,
            seed: self.cfg.seed,
            edges: self.fds.graph().len(),
            complete_edges: n * (n - 1) / 2,
            pairs: inner.wspd().len(),
            materialized_pairs: inner.store().values().filter(|e| e.materialized).count(),
            updates: self.fds.total_updates(),
            rebuilds: self.fds.rebuilds(),
            spectral: if verify { Some(self.spectral()?) } else { None },
        })
    }

    /// Relative errors of the incremental sketch states against scratch.
    pub fn sketch_errors(&self) -> Result<(Option<f64>, Option<f64>), CliError> {
        let lh = self.fds.get_laplacian();
        let mul = self.multiply.as_ref().map(|m| {
            let (lt, _, zt) = m.scratch(&lh);
            relative_error(&lt, m.sketched_laplacian()).max(rel_vec(&zt, &m.query()))
        });
        let sol = match self.solve.as_ref() {
            Some(s) => {
                let (lt, _, yt) = s.scratch(&lh)?;
                Some(relative_error(&lt, s.sketched_laplacian()).max(rel_vec(&yt, &s.query())))
            }
            None => None,
        };
        Ok((mul, sol))
    }
}

fn rel_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

fn millis(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

pub fn cmd_build(points: &[Vec<f64>], cfg: &RunConfig, verify: bool) -> Result<Outcome, CliError> {
    let t = Instant::now();
    let session = Session::new(points, cfg)?;
    let init_ms = millis(t);
    let summary = session.summary(verify)?;
    let ok = summary.spectral.is_none_or(|s| s.passed);
    Ok(Outcome {
        report: json!({
            "command": "build",
            "summary": summary,
            "warning": session.warning,
            "timing": { "init_ms": init_ms },
        }),
        ok,
    })
}

#[derive(Debug, Clone, Serialize)]
struct OpRecord {
    line: usize,
    op: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    i: Option<usize>,
    edges_changed: usize,
    pairs_touched: usize,
    rebuilt: bool,
}

#[derive(Debug, Clone, Serialize)]
struct Checkpoint {
    step: usize,
    spectral: SpectralReport,
    consistent: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    multiply_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solve_error: Option<f64>,
}

impl Checkpoint {
    fn ok(&self) -> bool {
        self.spectral.passed
            && self.consistent
            && self.multiply_error.is_none_or(|e| e <= SKETCH_TOL)
            && self.solve_error.is_none_or(|e| e <= SKETCH_TOL)
    }
}

fn checkpoint(session: &Session, step: usize) -> Result<Checkpoint, CliError> {
    let (multiply_error, solve_error) = session.sketch_errors()?;
    Ok(Checkpoint {
        step,
        spectral: session.spectral()?,
        consistent: session.fds.inner().check_consistency().is_ok(),
        multiply_error,
        solve_error,
    })
}

fn check_indices(op: &TraceOp, n: usize, line: usize) -> Result<(), CliError> {
    let bad = match op {
        TraceOp::Move { i, .. } => (*i >= n).then_some(*i),
        TraceOp::Mulv { nz } | TraceOp::Solveb { nz } => nz.iter().map(|p| p.0).find(|&j| j >= n),
    };
    match bad {
        Some(index) => Err(CliError::Trace { line, source: geospar::Error::IndexOutOfRange { index, len: n } }),
        None => Ok(()),
    }
}

pub fn cmd_replay(
    points: &[Vec<f64>],
    trace: &[(usize, TraceOp)],
    cfg: &RunConfig,
    verify: bool,
) -> Result<Outcome, CliError> {
    let t = Instant::now();
    let mut session = Session::new(points, cfg)?;
    let init_ms = millis(t);
    let n = session.n();
    for (line, op) in trace {
        check_indices(op, n, *line)?;
    }

    let mut ops = Vec::with_capacity(trace.len());
    let mut op_us = Vec::with_capacity(trace.len());
    let mut checkpoints = Vec::new();
    let run = Instant::now();
    for (step, (line, op)) in trace.iter().enumerate() {
        let t = Instant::now();
        let (edges_changed, pairs_touched, rebuilt) = session.apply(op).map_err(|e| match e {
            CliError::Core(source) => CliError::Trace { line: *line, source },
            other => other,
        })?;
        op_us.push(t.elapsed().as_secs_f64() * 1e6);
        let i = match op {
            TraceOp::Move { i, .. } => Some(*i),
            _ => None,
        };
        ops.push(OpRecord { line: *line, op: op.name(), i, edges_changed, pairs_touched, rebuilt });
        let done = step + 1;
        if verify && cfg.checkpoint > 0 && (done % cfg.checkpoint == 0 || done == trace.len()) {
            checkpoints.push(checkpoint(&session, done)?);
        }
    }
    let run_ms = millis(run);

    let summary = session.summary(verify)?;
    let ok = checkpoints.iter().all(Checkpoint::ok) && summary.spectral.is_none_or(|s| s.passed);
    op_us.sort_by(f64::total_cmp);
    let edges_total: usize = ops.iter().map(|o| o.edges_changed).sum();
    Ok(Outcome {
        report: json!({
            "command": "replay",
            "summary": summary,
            "warning": session.warning,
            "ops": ops,
            "edges_changed_total": edges_total,
            "checkpoints": checkpoints,
            "timing": {
                "init_ms": init_ms,
                "replay_ms": run_ms,
                "op_us": {
                    "p50": percentile(&op_us, 0.5),
                    "p90": percentile(&op_us, 0.9),
                    "p99": percentile(&op_us, 0.99),
                    "max": op_us.last().copied().unwrap_or(0.0),
                },
            },
        }),
        ok,
    })
}

/// Uniform points in `[0,1]^d`.
pub fn random_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

/// `count` random in-region moves (uniform targets in the original box).
pub fn random_moves(points: &[Vec<f64>], count: usize, seed: u64) -> Vec<TraceOp> {
    let d = points[0].len();
    let lo: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| TraceOp::Move {
            i: rng.random_range(0..points.len()),
            z: (0..d).map(|j| lo[j] + rng.random::<f64>() * (hi[j] - lo[j])).collect(),
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, Serialize)]
struct BenchRow {
    n: usize,
    edges: usize,
    pairs: usize,
    updates: usize,
    edges_touched: usize,
    pairs_touched: usize,
}

#[derive(Debug, Clone, Serialize)]
struct BenchTiming {
    n: usize,
    rebuild_ms: f64,
    update_ms: f64,
    ratio: f64,
}

/// Rebuild time vs mean per-update time for each `n` in the grid.
/// Points come from `points` (prefixes) or are drawn uniformly.
pub fn cmd_bench(points: Option<&[Vec<f64>]>, cfg: &RunConfig) -> Result<Outcome, CliError> {
    // rebuilds would make update time include init time
    let cfg = RunConfig { rebuild_budget: Some(usize::MAX), ..cfg.clone() };
    let mut rows = Vec::new();
    let mut timing = Vec::new();
    for &n in &cfg.bench_sizes {
        let pts: Vec<Vec<f64>> = match points {
            Some(p) if p.len() >= n => p[..n].to_vec(),
            Some(p) => {
                return Err(CliError::Check(format!("bench size {n} exceeds the {} points supplied", p.len())));
            }
            None => random_points(n, cfg.bench_dim, cfg.seed ^ n as u64),
        };
        let moves = random_moves(&pts, cfg.bench_updates, cfg.seed.wrapping_add(n as u64));
        let mut rebuild = Vec::new();
        let mut update = Vec::new();
        let mut row = None;
        for _ in 0..cfg.bench_runs.max(1) {
            let t = Instant::now();
            let mut session = Session::new(&pts, &cfg)?;
            rebuild.push(millis(t));
            let (edges, pairs) = (session.fds.graph().len(), session.fds.inner().wspd().len());
            let (mut edges_touched, mut pairs_touched) = (0, 0);
            let t = Instant::now();
            for op in &moves {
                let (e, p, _) = session.apply(op)?;
                edges_touched += e;
                pairs_touched += p;
            }
            update.push(millis(t) / moves.len().max(1) as f64);
            row = Some(BenchRow { n, edges, pairs, updates: moves.len(), edges_touched, pairs_touched });
        }
        let (rebuild_ms, update_ms) = (median(rebuild), median(update));
        rows.push(row.expect("at least one run"));
        timing.push(BenchTiming { n, rebuild_ms, update_ms, ratio: update_ms / rebuild_ms });
    }
    let decreasing = timing.windows(2).all(|w| w[1].ratio < w[0].ratio);
    Ok(Outcome {
        report: json!({
            "command": "bench",
            "rows": rows,
            "timing": { "rows": timing, "ratio_decreasing": decreasing },
        }),
        ok: true,
    })
}

/// Distance estimates for each query row; `--verify` adds the failure
/// counts against exact distances.
pub fn cmd_ujl(points: &[Vec<f64>], queries: &[Vec<f64>], cfg: &RunConfig, verify: bool) -> Result<Outcome, CliError> {
    let store = UltraJlStore::init(points.to_vec(), cfg.eps, cfg.seed)?;
    let upper = upper_distortion(store.n(), store.k(), DEFAULT_UPPER_C);
    let mut estimates = Vec::with_capacity(queries.len());
    let mut failures = Vec::new();
    for q in queries {
        let u = store.query(q)?;
        if verify {
            failures.push(check_estimates(&store, q, &u, upper).failures());
        }
        estimates.push(u);
    }
    let limit = 2.0 / store.n() as f64;
    let ok = failures.iter().all(|&f| f as f64 / store.n() as f64 <= limit);
    let mut report = json!({
        "command": "ujl",
        "n": store.n(),
        "d": store.d(),
        "k": store.k(),
        "factor": store.factor(),
        "upper": upper,
        "estimates": estimates,
    });
    if verify {
        report["failures"] = json!(failures);
    }
    Ok(Outcome { report, ok })
}

#[derive(Debug, Clone, Serialize)]
struct AuditJson {
    multiply_error: f64,
    multiply_bound: f64,
    solve_error: f64,
    solve_bound: f64,
}

impl From<AuditReport> for AuditJson {
    fn from(a: AuditReport) -> Self {
        AuditJson {
            multiply_error: a.multiply_error,
            multiply_bound: a.multiply_bound,
            solve_error: a.solve_error,
            solve_bound: a.solve_bound,
        }
    }
}

/// Spectral check, structural consistency and the unsketched audit with a
/// seeded Gaussian `v` and `b = L_G v`.
pub fn cmd_verify(points: &[Vec<f64>], cfg: &RunConfig) -> Result<Outcome, CliError> {
    let session = Session::new(points, cfg)?;
    let inner = session.fds.inner();
    let lg = dense_laplacian(inner.points(), inner.kernel());
    let lh = session.fds.get_laplacian();
    let spectral = check_spectral_sparsifier(&lg, &lh, cfg.eps)?;
    let consistency = inner.check_consistency();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let v: Vec<f64> = (0..inner.n()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let b: Vec<f64> = (&lg.matrix * DVector::from_column_slice(&v)).iter().copied().collect();
    let audit = approximation_audit(&lg, &lh, &v, &b, cfg.eps)?;
    let ok = spectral.passed && consistency.is_ok() && audit.multiply_ok && audit.solve_ok;
    Ok(Outcome {
        report: json!({
            "command": "verify",
            "summary": session.summary(false)?,
            "spectral": spectral,
            "consistency": consistency.err(),
            "audit": AuditJson::from(audit),
            "passed": ok,
        }),
        ok,
    })
}
