//! The dynamic kernel-graph sparsifier.
//!
//! Points are projected to a handful of dimensions, partitioned by a
//! well-separated pair decomposition of the projected set, and every pair
//! `(X, Y)` contributes a uniform sample of its biclique with kernel weights
//! evaluated in the original space, scaled by `|X||Y| / s`.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{kernel_weight, DenseLaplacian, KernelFunction, PointSet};
use crate::projection::UltraJlMap;
use crate::quadtree::CompressedQuadTree;
use crate::sampling::{rand_sample, resample_fast, EdgeSample};
use crate::wspd::{PairKey, Wspd};

/// Default exponent constant in `gamma = c_jl * L / k`.
pub const DEFAULT_C_JL: f64 = 0.1;
/// Default multiplier of the per-pair sample size.
pub const DEFAULT_C_S: f64 = 0.05;

const SAMPLING_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsifierConfig {
    pub eps: f64,
    pub delta: f64,
    /// Projected dimension; `None` picks `ceil(sqrt(log2 n))`.
    pub k: Option<usize>,
    pub c_jl: f64,
    pub c_s: f64,
    /// Permit `eps` above 0.1.
    pub allow_large_eps: bool,
    pub seed: u64,
}

impl Default for SparsifierConfig {
    fn default() -> Self {
        SparsifierConfig { eps: 0.1, delta: 0.05, k: None, c_jl: DEFAULT_C_JL, c_s: DEFAULT_C_S, allow_large_eps: false, seed: 0 }
    }
}

impl SparsifierConfig {
    /// Desk-scale settings: `eps` may exceed 0.1.
    pub fn desk(eps: f64, seed: u64) -> Self {
        SparsifierConfig { eps, allow_large_eps: true, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let eps_max = if self.allow_large_eps { 1.0 } else { 0.1 };
        let eps_ok = self.eps > 0.0 && (self.eps < eps_max || (!self.allow_large_eps && self.eps == 0.1));
        if !eps_ok {
            return Err(Error::InvalidParameter(format!(
                "eps = {} outside (0, {eps_max}){}",
                self.eps,
                if self.allow_large_eps { "" } else { "; set allow_large_eps for desk-scale runs" }
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta = {} outside (0, 1)", self.delta)));
        }
        if self.c_jl < 0.0 || self.c_s <= 0.0 {
            return Err(Error::InvalidParameter("sample-size constants must be positive".into()));
        }
        if self.k == Some(0) {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        Ok(())
    }

    /// Projected dimension used for `n` points in `d` dimensions.
    pub fn projected_dim(&self, n: usize, d: usize) -> usize {
        let k = self.k.unwrap_or_else(|| auto_k(n));
        k.clamp(1, d.min(crate::quadtree::MAX_TREE_DIM))
    }
}

/// `ceil(sqrt(log2 n))`, at least 1.
pub fn auto_k(n: usize) -> usize {
    ((n.max(2) as f64).log2().sqrt().ceil() as usize).max(1)
}

/// Per-pair sample size.
pub fn sample_size(n: usize, x: usize, y: usize, eps: f64, gamma: f64, c_s: f64) -> usize {
    let m = (x + y) as f64;
    let s = c_s / (eps * eps) * (n as f64).powf(gamma) * m * (m + 1.0).ln();
    s.ceil() as usize
}

/// Adversarial-setting preset: `k = ceil(sqrt(log2 n))` plus the aspect
/// ratio budget check `d log2(alpha) <= c log2(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialPreset {
    pub config: SparsifierConfig,
    pub k: usize,
    pub budget_lhs: f64,
    pub budget_rhs: f64,
    pub warning: Option<String>,
}

pub const ADVERSARIAL_BUDGET_C: f64 = 4.0;

pub fn adversarial_mode(base: &SparsifierConfig, n: usize, d: usize, alpha: f64) -> AdversarialPreset {
    let k = auto_k(n);
    let budget_lhs = d as f64 * alpha.log2();
    let budget_rhs = ADVERSARIAL_BUDGET_C * (n.max(2) as f64).log2();
    let warning = (budget_lhs > budget_rhs).then(|| {
        let msg = format!("aspect ratio budget exceeded: d*log2(alpha) = {budget_lhs:.2} > {budget_rhs:.2}");
        log::warn!("{msg}");
        msg
    });
    AdversarialPreset { config: SparsifierConfig { k: Some(k), ..base.clone() }, k, budget_lhs, budget_rhs, warning }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeWeight {
    pub weight: f64,
    pub scale: f64,
}

/// The sparsifier `H`: a weighted edge map keyed by `(min, max)`.
#[derive(Debug, Clone, Default)]
pub struct SparsifierGraph {
    n: usize,
    edges: BTreeMap<(usize, usize), EdgeWeight>,
    adj: Vec<BTreeSet<usize>>,
}

fn key(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

impl SparsifierGraph {
    fn new(n: usize) -> Self {
        SparsifierGraph { n, edges: BTreeMap::new(), adj: vec![BTreeSet::new(); n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.edges.get(&key(i, j)).map(|e| e.weight)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|(&(i, j), e)| (i, j, e.weight))
    }

    pub fn edge_map(&self) -> BTreeMap<(usize, usize), f64> {
        self.edges.iter().map(|(&k, e)| (k, e.weight)).collect()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[i].iter().copied()
    }

    pub fn laplacian(&self) -> DenseLaplacian {
        DenseLaplacian::from_edges(self.n, self.edges())
    }

    fn set(&mut self, e: (usize, usize), value: Option<EdgeWeight>) -> Option<EdgeWeight> {
        match value {
            Some(w) => {
                self.adj[e.0].insert(e.1);
                self.adj[e.1].insert(e.0);
                self.edges.insert(e, w)
            }
            None => {
                self.adj[e.0].remove(&e.1);
                self.adj[e.1].remove(&e.0);
                self.edges.remove(&e)
            }
        }
    }
}

/// A weight change of one edge; `0.0` stands for "absent".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeDiff {
    pub i: usize,
    pub j: usize,
    pub before: f64,
    pub after: f64,
}

impl EdgeDiff {
    pub fn delta(&self) -> f64 {
        self.after - self.before
    }
}

/// Edge changes accumulated since the last drain, coalesced per edge.
#[derive(Debug, Clone, Default)]
pub struct DiffBuffer {
    pending: BTreeMap<(usize, usize), (f64, f64)>,
}

impl DiffBuffer {
    pub fn record(&mut self, i: usize, j: usize, before: f64, after: f64) {
        self.pending.entry(key(i, j)).and_modify(|e| e.1 = after).or_insert((before, after));
    }

    pub fn merge(&mut self, diffs: &[EdgeDiff]) {
        for d in diffs {
            self.record(d.i, d.j, d.before, d.after);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pending.values().all(|(b, a)| b == a)
    }

    pub fn drain(&mut self) -> Vec<EdgeDiff> {
        std::mem::take(&mut self.pending)
            .into_iter()
            .filter(|(_, (b, a))| b != a)
            .map(|((i, j), (before, after))| EdgeDiff { i, j, before, after })
            .collect()
    }
}

/// Applies diffs to an edge map by assignment, dropping edges set to zero.
pub fn replay_diffs(edges: &mut BTreeMap<(usize, usize), f64>, diffs: &[EdgeDiff]) {
    for d in diffs {
        if d.after == 0.0 {
            edges.remove(&key(d.i, d.j));
        } else {
            edges.insert(key(d.i, d.j), d.after);
        }
    }
}

/// Sample kept for one well-separated pair.
#[derive(Debug, Clone)]
pub struct PairEntry {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub sample: EdgeSample,
    pub scale: f64,
    pub materialized: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub pairs_touched: usize,
    pub edges_changed: usize,
    pub resampled: usize,
    pub materialized: usize,
    pub fresh: usize,
    pub churn: usize,
}

#[derive(Debug, Clone)]
pub struct DynamicGeoSpar {
    config: SparsifierConfig,
    kernel: KernelFunction,
    points: PointSet,
    map: UltraJlMap,
    lo: Vec<f64>,
    width: f64,
    gamma: f64,
    tree: CompressedQuadTree,
    wspd: Wspd,
    store: BTreeMap<PairKey, PairEntry>,
    graph: SparsifierGraph,
    diff: DiffBuffer,
    rng: ChaCha8Rng,
    updates: usize,
}

impl DynamicGeoSpar {
    pub fn initialize(points: PointSet, kernel: KernelFunction, config: SparsifierConfig) -> Result<Self> {
        config.validate()?;
        let n = points.len();
        if n < 2 {
            return Err(Error::EmptyInput(n));
        }
        let k = config.projected_dim(n, points.dim());
        let map = UltraJlMap::unchecked(points.dim(), k, config.seed);
        let (lo, hi) = map.unit_cube_image();
        let width = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let gamma = config.c_jl * kernel.lipschitz_l / k as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(SAMPLING_STREAM);

        let mut g = DynamicGeoSpar {
            tree: CompressedQuadTree::new(k)?,
            wspd: Wspd::compute(&CompressedQuadTree::new(k)?),
            config,
            kernel,
            map,
            lo,
            width,
            gamma,
            store: BTreeMap::new(),
            graph: SparsifierGraph::new(n),
            diff: DiffBuffer::default(),
            rng,
            updates: 0,
            points,
        };
        let projected: Vec<Vec<f64>> = (0..n).map(|i| g.tree_coords(g.points.point(i))).collect();
        g.tree = CompressedQuadTree::build(k, projected.iter().enumerate().map(|(i, q)| (i, q.as_slice())))?;
        g.wspd = Wspd::compute(&g.tree);
        let keys: Vec<PairKey> = g.wspd.pairs().iter().copied().collect();
        for pk in keys {
            let left = g.tree.points_under(&pk.0);
            let right = g.tree.points_under(&pk.1);
            let s = g.sample_size(left.len(), right.len());
            let entry = if left.len() * right.len() <= s {
                g.materialize(left, right)
            } else {
                let sample = rand_sample(&left, &right, s, &mut g.rng);
                g.sampled(left, right, sample)
            };
            for &(i, j) in &entry.sample.edges {
                let w = EdgeWeight { weight: kernel_weight(&g.points, &g.kernel, i, j) * entry.scale, scale: entry.scale };
                g.graph.set(key(i, j), Some(w));
            }
            g.store.insert(pk, entry);
        }
        Ok(g)
    }

    /// Coordinates of a normalized point in the projected unit cube.
    fn tree_coords(&self, unit: &[f64]) -> Vec<f64> {
        self.map
            .project_unchecked(unit)
            .iter()
            .zip(&self.lo)
            .map(|(v, lo)| (0.25 + 0.5 * (v - lo) / self.width).clamp(0.0, 1.0 - f64::EPSILON))
            .collect()
    }

    fn sample_size(&self, x: usize, y: usize) -> usize {
        sample_size(self.points.len(), x, y, self.config.eps, self.gamma, self.config.c_s)
    }

    fn materialize(&self, left: Vec<usize>, right: Vec<usize>) -> PairEntry {
        let mut edges = BTreeSet::new();
        for &i in &left {
            for &j in &right {
                edges.insert((i, j));
            }
        }
        let target = edges.len();
        PairEntry { left, right, sample: EdgeSample { edges, target }, scale: 1.0, materialized: true }
    }

    fn sampled(&self, left: Vec<usize>, right: Vec<usize>, sample: EdgeSample) -> PairEntry {
        let scale = (left.len() * right.len()) as f64 / sample.len() as f64;
        PairEntry { left, right, sample, scale, materialized: false }
    }

    pub fn config(&self) -> &SparsifierConfig {
        &self.config
    }

    pub fn kernel(&self) -> &KernelFunction {
        &self.kernel
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn k(&self) -> usize {
        self.map.k()
    }

    pub fn projection(&self) -> &UltraJlMap {
        &self.map
    }

    pub fn tree(&self) -> &CompressedQuadTree {
        &self.tree
    }

    pub fn wspd(&self) -> &Wspd {
        &self.wspd
    }

    pub fn store(&self) -> &BTreeMap<PairKey, PairEntry> {
        &self.store
    }

    pub fn graph(&self) -> &SparsifierGraph {
        &self.graph
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Projected coordinates of point `i` (before the affine placement into
    /// the tree's unit cube).
    pub fn projected(&self, i: usize) -> Vec<f64> {
        self.map.project_unchecked(self.points.point(i))
    }

    /// `sum over pairs of min(s_i, |X_i||Y_i|)`.
    pub fn budget(&self) -> usize {
        self.store.values().map(|e| e.sample.len()).sum()
    }

    /// Rebuilds `H` from the stored samples.
    pub fn fold_store(&self) -> BTreeMap<(usize, usize), f64> {
        let mut out = BTreeMap::new();
        for e in self.store.values() {
            for &(i, j) in &e.sample.edges {
                out.insert(key(i, j), kernel_weight(&self.points, &self.kernel, i, j) * e.scale);
            }
        }
        out
    }

    pub fn get_laplacian(&self) -> DenseLaplacian {
        self.graph.laplacian()
    }

    /// Returns and clears the pending edge changes.
    pub fn get_diff(&mut self) -> Vec<EdgeDiff> {
        self.diff.drain()
    }

    /// Moves point `i` to the raw location `z`.
    pub fn update(&mut self, i: usize, z: &[f64]) -> Result<UpdateReport> {
        let unit = self.points.check_move(i, z)?;
        if unit.as_slice() == self.points.point(i) {
            return Ok(UpdateReport::default());
        }
        let q = self.tree_coords(&unit);
        let modified = self.wspd.move_point(&mut self.tree, i, &q)?;
        self.points.set_unit(i, &unit);
        self.updates += 1;

        let mut before: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut report = UpdateReport { pairs_touched: modified.len(), ..Default::default() };

        let mut removed: BTreeMap<PairKey, PairEntry> = BTreeMap::new();
        for m in &modified {
            if let Some(bk) = m.before {
                if let Some(entry) = self.store.remove(&bk) {
                    for &(a, b) in &entry.sample.edges {
                        let e = key(a, b);
                        let old = self.graph.set(e, None);
                        before.entry(e).or_insert(old.map_or(0.0, |w| w.weight));
                    }
                    removed.insert(bk, entry);
                }
            }
        }
        for m in &modified {
            let Some(ak) = m.after else { continue };
            let left = self.tree.points_under(&ak.0);
            let right = self.tree.points_under(&ak.1);
            let old = m.before.and_then(|bk| removed.remove(&bk)).map(|mut e| {
                if m.swapped {
                    std::mem::swap(&mut e.left, &mut e.right);
                    e.sample.edges = e.sample.edges.iter().map(|&(a, b)| (b, a)).collect();
                }
                e
            });
            let s = self.sample_size(left.len(), right.len());
            let size = left.len() * right.len();
            let entry = match old {
                Some(mut e) if same_set(&e.left, &left) && same_set(&e.right, &right) => {
                    e.left = left;
                    e.right = right;
                    e
                }
                _ if size <= s => {
                    report.materialized += 1;
                    self.materialize(left, right)
                }
                Some(e) if 2 * sym_diff_size(&e.left, &e.right, &left, &right) <= size => {
                    let (sample, churn) = resample_fast(&e.sample, &e.left, &e.right, &left, &right, s, &mut self.rng);
                    report.resampled += 1;
                    report.churn += churn;
                    self.sampled(left, right, sample)
                }
                _ => {
                    report.fresh += 1;
                    let sample = rand_sample(&left, &right, s, &mut self.rng);
                    self.sampled(left, right, sample)
                }
            };
            for &(a, b) in &entry.sample.edges {
                let e = key(a, b);
                let w = EdgeWeight { weight: kernel_weight(&self.points, &self.kernel, a, b) * entry.scale, scale: entry.scale };
                let old = self.graph.set(e, Some(w));
                before.entry(e).or_insert(old.map_or(0.0, |w| w.weight));
            }
            self.store.insert(ak, entry);
        }

        // kernel weights of every remaining edge at the moved point
        let nbrs: Vec<usize> = self.graph.neighbors(i).collect();
        for j in nbrs {
            let e = key(i, j);
            let cur = self.graph.edges[&e];
            let w = kernel_weight(&self.points, &self.kernel, i, j) * cur.scale;
            self.graph.set(e, Some(EdgeWeight { weight: w, scale: cur.scale }));
            before.entry(e).or_insert(cur.weight);
        }

        for (e, old) in before {
            let now = self.graph.weight(e.0, e.1).unwrap_or(0.0);
            if now != old {
                report.edges_changed += 1;
                self.diff.record(e.0, e.1, old, now);
            }
        }
        Ok(report)
    }

    /// Structural consistency: projection, tree, decomposition and store.
    pub fn check_consistency(&self) -> std::result::Result<(), String> {
        for i in 0..self.n() {
            let q = self.tree_coords(self.points.point(i));
            if self.tree.point(i) != Some(q.as_slice()) {
                return Err(format!("projected point {i} out of sync"));
            }
        }
        self.tree.validate()?;
        self.wspd.validate(&self.tree)?;
        if self.wspd.pairs() != Wspd::compute(&self.tree).pairs() {
            return Err("pair list differs from recomputation".into());
        }
        if self.store.len() != self.wspd.len() || self.store.keys().any(|k| !self.wspd.contains(k)) {
            return Err("store keys differ from pair list".into());
        }
        if self.fold_store() != self.graph.edge_map() {
            return Err("H differs from the folded store".into());
        }
        Ok(())
    }
}

fn same_set(a: &[usize], b: &[usize]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_unstable();
    y.sort_unstable();
    x == y
}

/// `|(A x B) sym-diff (A' x B')|`.
fn sym_diff_size(a: &[usize], b: &[usize], a2: &[usize], b2: &[usize]) -> usize {
    let sa: BTreeSet<usize> = a.iter().copied().collect();
    let sb: BTreeSet<usize> = b.iter().copied().collect();
    let ia = a2.iter().filter(|x| sa.contains(x)).count();
    let ib = b2.iter().filter(|x| sb.contains(x)).count();
    a.len() * b.len() + a2.len() * b2.len() - 2 * ia * ib
}

/// Periodically rebuilt sparsifier supporting an unbounded number of moves.
#[derive(Debug, Clone)]
pub struct FullyDynamicSparsifier {
    inner: DynamicGeoSpar,
    base_seed: u64,
    rebuilds: usize,
    counter: usize,
    budget: usize,
    total_updates: usize,
    fixed_budget: Option<usize>,
    diff: DiffBuffer,
}

/// Seed of the `r`-th instance in a rebuild schedule.
pub fn rebuild_seed(base: u64, r: usize) -> u64 {
    base.wrapping_add((r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

impl FullyDynamicSparsifier {
    pub fn new(points: PointSet, kernel: KernelFunction, config: SparsifierConfig) -> Result<Self> {
        let base_seed = config.seed;
        let inner = DynamicGeoSpar::initialize(points, kernel, config)?;
        let budget = (inner.n() / 2).max(1);
        Ok(FullyDynamicSparsifier {
            inner,
            base_seed,
            rebuilds: 0,
            counter: 0,
            budget,
            total_updates: 0,
            fixed_budget: None,
            diff: DiffBuffer::default(),
        })
    }

    pub fn inner(&self) -> &DynamicGeoSpar {
        &self.inner
    }

    pub fn rebuilds(&self) -> usize {
        self.rebuilds
    }

    /// Moves since the last rebuild.
    pub fn counter(&self) -> usize {
        self.counter
    }

    pub fn rebuild_budget(&self) -> usize {
        self.budget
    }

    /// Fixes the number of moves between rebuilds instead of `n/2`.
    pub fn set_rebuild_budget(&mut self, budget: usize) {
        self.fixed_budget = Some(budget.max(1));
        self.budget = budget.max(1);
    }

    pub fn total_updates(&self) -> usize {
        self.total_updates
    }

    pub fn graph(&self) -> &SparsifierGraph {
        self.inner.graph()
    }

    pub fn get_laplacian(&self) -> DenseLaplacian {
        self.inner.get_laplacian()
    }

    pub fn get_diff(&mut self) -> Vec<EdgeDiff> {
        let inner = self.inner.get_diff();
        self.diff.merge(&inner);
        self.diff.drain()
    }

    /// Moves a point; returns the report and whether a rebuild followed.
    pub fn update(&mut self, i: usize, z: &[f64]) -> Result<(UpdateReport, bool)> {
        let report = self.inner.update(i, z)?;
        self.total_updates += 1;
        self.counter += 1;
        if self.counter < self.budget {
            return Ok((report, false));
        }
        self.rebuild()?;
        Ok((report, true))
    }

    fn rebuild(&mut self) -> Result<()> {
        let pending = self.inner.get_diff();
        self.diff.merge(&pending);
        let old = self.inner.graph().edge_map();
        let config = SparsifierConfig { seed: rebuild_seed(self.base_seed, self.rebuilds + 1), ..self.inner.config.clone() };
        let fresh = DynamicGeoSpar::initialize(self.inner.points.clone(), self.inner.kernel, config)?;
        let new = fresh.graph().edge_map();
        for (e, w) in &old {
            self.diff.record(e.0, e.1, *w, new.get(e).copied().unwrap_or(0.0));
        }
        for (e, w) in &new {
            if !old.contains_key(e) {
                self.diff.record(e.0, e.1, 0.0, *w);
            }
        }
        self.inner = fresh;
        self.rebuilds += 1;
        self.counter = 0;
        self.budget = self.fixed_budget.unwrap_or((self.inner.n() / 2).max(1));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{check_spectral_sparsifier, dense_laplacian};
    use rand::Rng;

    fn random_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
    }

    fn exp_kernel() -> KernelFunction {
        KernelFunction::by_name("exp").unwrap()
    }

    #[test]
    fn two_points_single_edge() {
        let ps = PointSet::normalize(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let g = DynamicGeoSpar::initialize(ps, exp_kernel(), SparsifierConfig::desk(0.5, 1)).unwrap();
        let edges: Vec<_> = g.graph().edges().collect();
        assert_eq!(edges.len(), 1);
        assert!((edges[0].2 - (-1.0f64).exp()).abs() < 1e-15);
        let l = g.get_laplacian();
        assert_eq!(l.matrix[(0, 1)], -edges[0].2);
        assert_eq!(l.matrix[(0, 0)], edges[0].2);
    }

    #[test]
    fn config_validation() {
        assert!(SparsifierConfig { eps: 0.5, ..Default::default() }.validate().is_err());
        assert!(SparsifierConfig::default().validate().is_ok());
        assert!(SparsifierConfig::desk(0.5, 0).validate().is_ok());
        assert!(SparsifierConfig::desk(1.0, 0).validate().is_err());
        assert!(SparsifierConfig { delta: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn adversarial_preset_arithmetic() {
        let p = adversarial_mode(&SparsifierConfig::default(), 256, 8, 4.0);
        assert_eq!(p.k, 3);
        assert_eq!(p.config.k, Some(3));
        assert_eq!(p.budget_lhs, 16.0);
        assert_eq!(p.budget_rhs, 32.0);
        assert!(p.warning.is_none());
        assert!(adversarial_mode(&SparsifierConfig::default(), 256, 8, 1e6).warning.is_some());
    }

    #[test]
    fn init_is_consistent_and_spectral() {
        let ps = PointSet::normalize(&random_points(64, 4, 3)).unwrap();
        let g = DynamicGeoSpar::initialize(ps.clone(), exp_kernel(), SparsifierConfig::desk(0.5, 3)).unwrap();
        g.check_consistency().unwrap();
        let lg = dense_laplacian(&ps, &exp_kernel());
        let rep = check_spectral_sparsifier(&lg, &g.get_laplacian(), 0.5).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(g.budget() == g.graph().len());
    }

    #[test]
    fn updates_keep_store_and_diff_in_sync() {
        let raw = random_points(48, 3, 4);
        let ps = PointSet::normalize(&raw).unwrap();
        let mut g = DynamicGeoSpar::initialize(ps, exp_kernel(), SparsifierConfig::desk(0.5, 4)).unwrap();
        let mut replay = g.graph().edge_map();
        let (lo, hi) = bounds(&raw);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..40 {
            let i = rng.random_range(0..48);
            let z: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| a + (b - a) * rng.random::<f64>()).collect();
            let report = g.update(i, &z).unwrap();
            let diff = g.get_diff();
            assert_eq!(diff.len(), report.edges_changed);
            assert!(g.get_diff().is_empty());
            replay_diffs(&mut replay, &diff);
            assert_eq!(replay, g.graph().edge_map());
        }
        g.check_consistency().unwrap();
    }

    fn bounds(raw: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let d = raw[0].len();
        let lo = (0..d).map(|j| raw.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min)).collect();
        let hi = (0..d).map(|j| raw.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
        (lo, hi)
    }

    #[test]
    fn update_errors() {
        let raw = random_points(10, 2, 5);
        let ps = PointSet::normalize(&raw).unwrap();
        let mut g = DynamicGeoSpar::initialize(ps, exp_kernel(), SparsifierConfig::desk(0.5, 5)).unwrap();
        assert!(matches!(g.update(0, &[100.0, 100.0]), Err(Error::OutOfRegion(0))));
        assert!(matches!(g.update(0, &raw[1]), Err(Error::DuplicatePoint { .. })));
        assert!(matches!(g.update(50, &raw[1]), Err(Error::IndexOutOfRange { .. })));
        g.check_consistency().unwrap();
    }

    #[test]
    fn wrapper_rebuilds_on_schedule() {
        let raw = random_points(16, 3, 6);
        let ps = PointSet::normalize(&raw).unwrap();
        let mut w = FullyDynamicSparsifier::new(ps, exp_kernel(), SparsifierConfig::desk(0.5, 6)).unwrap();
        assert_eq!(w.rebuild_budget(), 8);
        let mut replay = w.graph().edge_map();
        let (lo, hi) = bounds(&raw);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for step in 1..=20 {
            let z: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| a + (b - a) * rng.random::<f64>()).collect();
            let (_, rebuilt) = w.update(rng.random_range(0..16), &z).unwrap();
            assert_eq!(rebuilt, step % 8 == 0);
            assert_eq!(w.counter(), step % 8);
            replay_diffs(&mut replay, &w.get_diff());
            assert_eq!(replay, w.graph().edge_map());
        }
        assert_eq!(w.rebuilds(), 2);
        assert_eq!(w.total_updates(), 20);
    }

    #[test]
    fn rebuild_equals_fresh_initialize() {
        let raw = random_points(12, 3, 7);
        let ps = PointSet::normalize(&raw).unwrap();
        let mut w = FullyDynamicSparsifier::new(ps, exp_kernel(), SparsifierConfig::desk(0.5, 7)).unwrap();
        let (lo, hi) = bounds(&raw);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..6 {
            let z: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| a + (b - a) * rng.random::<f64>()).collect();
            w.update(rng.random_range(0..12), &z).unwrap();
        }
        assert_eq!(w.rebuilds(), 1);
        let fresh = DynamicGeoSpar::initialize(
            w.inner().points().clone(),
            exp_kernel(),
            SparsifierConfig { seed: rebuild_seed(7, 1), ..SparsifierConfig::desk(0.5, 7) },
        )
        .unwrap();
        assert_eq!(fresh.graph().edge_map(), w.graph().edge_map());
    }
}
