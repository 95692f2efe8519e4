//! Sketched Laplacian products and solves maintained under point moves and
//! sparse vector changes.
//!
//! With sketches `Phi`, `Psi` (`m x n`), the multiply state keeps
//! `Lt = Phi L_H Psi^T`, `vt = Psi v` and `zt = Lt vt`; the solve state keeps
//! `Lt`, its pseudoinverse, `bt = Phi b` and `zt = Lt^+ bt`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{laplacian_pseudoinverse, DenseLaplacian, KernelFunction, PointSet};
use crate::projection::{make_sketch_pair, SketchMatrix};
use crate::sparsifier::{EdgeDiff, FullyDynamicSparsifier, SparsifierConfig};

/// Singular values below this fraction of the largest are treated as zero.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SketchConfig {
    pub eps: f64,
    pub delta: f64,
    pub c_sk: f64,
    pub seed: u64,
}

impl SketchConfig {
    pub fn new(eps: f64, delta: f64, seed: u64) -> Self {
        SketchConfig { eps, delta, c_sk: crate::projection::DEFAULT_SKETCH_CONSTANT, seed }
    }
}

/// `Phi * L * Psi^T` for the Laplacian of the given edges, formed as
/// `(Phi L) Psi^T` so each edge costs `O(m)`.
pub fn sketch_laplacian<I>(phi: &SketchMatrix, psi: &SketchMatrix, edges: I) -> DMatrix<f64>
where
    I: IntoIterator<Item = (usize, usize, f64)>,
{
    let mut cols: BTreeMap<usize, DVector<f64>> = BTreeMap::new();
    let m = phi.rows();
    let p = phi.matrix();
    for (i, j, w) in edges {
        if w == 0.0 {
            continue;
        }
        let diff = (p.column(i) - p.column(j)) * w;
        *cols.entry(i).or_insert_with(|| DVector::zeros(m)) += &diff;
        *cols.entry(j).or_insert_with(|| DVector::zeros(m)) -= &diff;
    }
    let mut out = DMatrix::zeros(m, psi.rows());
    let q = psi.matrix();
    for (c, a) in cols {
        out.ger(1.0, &a, &q.column(c), 1.0);
    }
    out
}

fn sketch_diff(phi: &SketchMatrix, psi: &SketchMatrix, diff: &[EdgeDiff]) -> DMatrix<f64> {
    sketch_laplacian(phi, psi, diff.iter().map(|d| (d.i, d.j, d.delta())))
}

/// Moore-Penrose pseudoinverse with a cutoff relative to the largest
/// singular value.
pub fn pseudoinverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !smax.is_finite() {
        return Err(Error::NumericalFailure("non-finite singular value".into()));
    }
    if smax == 0.0 {
        return Ok(DMatrix::zeros(a.ncols(), a.nrows()));
    }
    svd.pseudo_inverse(PINV_RELATIVE_CUTOFF * smax).map_err(|e| Error::NumericalFailure(e.to_string()))
}

fn sparse_check(n: usize, nz: &[(usize, f64)]) -> Result<()> {
    match nz.iter().find(|(i, _)| *i >= n) {
        Some(&(index, _)) => Err(Error::IndexOutOfRange { index, len: n }),
        None => Ok(()),
    }
}

/// Sketched product `Phi L_H Psi^T Psi v`, driven by edge diffs.
#[derive(Debug, Clone)]
pub struct MultiplySketch {
    phi: SketchMatrix,
    psi: SketchMatrix,
    lt: DMatrix<f64>,
    v: DVector<f64>,
    vt: DVector<f64>,
    zt: DVector<f64>,
}

impl MultiplySketch {
    pub fn new<I>(phi: SketchMatrix, psi: SketchMatrix, edges: I, v: &[f64]) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if v.len() != psi.cols() {
            return Err(Error::DimensionMismatch { expected: psi.cols(), found: v.len() });
        }
        let lt = sketch_laplacian(&phi, &psi, edges);
        let v = DVector::from_column_slice(v);
        let vt = psi.matrix() * &v;
        let zt = &lt * &vt;
        Ok(MultiplySketch { phi, psi, lt, v, vt, zt })
    }

    pub fn sketches(&self) -> (&SketchMatrix, &SketchMatrix) {
        (&self.phi, &self.psi)
    }

    pub fn sketched_laplacian(&self) -> &DMatrix<f64> {
        &self.lt
    }

    pub fn sketched_vector(&self) -> &DVector<f64> {
        &self.vt
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn query(&self) -> DVector<f64> {
        self.zt.clone()
    }

    pub fn apply_diff(&mut self, diff: &[EdgeDiff]) {
        if diff.is_empty() {
            return;
        }
        let dl = sketch_diff(&self.phi, &self.psi, diff);
        self.zt += &dl * &self.vt;
        self.lt += dl;
    }

    pub fn update_v(&mut self, nz: &[(usize, f64)]) -> Result<()> {
        sparse_check(self.v.len(), nz)?;
        let dvt = self.psi.apply_sparse(nz)?;
        for &(i, x) in nz {
            self.v[i] += x;
        }
        self.zt += &self.lt * &dvt;
        self.vt += dvt;
        Ok(())
    }

    /// `(Lt, vt, zt)` recomputed densely from `l_h` and the current `v`.
    pub fn scratch(&self, l_h: &DenseLaplacian) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let lt = self.phi.matrix() * &l_h.matrix * self.psi.matrix().transpose();
        let vt = self.psi.matrix() * &self.v;
        let zt = &lt * &vt;
        (lt, vt, zt)
    }
}

/// Sketched solve `(Phi L_H Psi^T)^+ Phi b`, driven by edge diffs.
#[derive(Debug, Clone)]
pub struct SolveSketch {
    phi: SketchMatrix,
    psi: SketchMatrix,
    lt: DMatrix<f64>,
    lt_pinv: DMatrix<f64>,
    b: DVector<f64>,
    bt: DVector<f64>,
    zt: DVector<f64>,
}

impl SolveSketch {
    pub fn new<I>(phi: SketchMatrix, psi: SketchMatrix, edges: I, b: &[f64]) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if b.len() != phi.cols() {
            return Err(Error::DimensionMismatch { expected: phi.cols(), found: b.len() });
        }
        let lt = sketch_laplacian(&phi, &psi, edges);
        let lt_pinv = pseudoinverse(&lt)?;
        let b = DVector::from_column_slice(b);
        let bt = phi.matrix() * &b;
        let zt = &lt_pinv * &bt;
        Ok(SolveSketch { phi, psi, lt, lt_pinv, b, bt, zt })
    }

    pub fn sketched_laplacian(&self) -> &DMatrix<f64> {
        &self.lt
    }

    pub fn sketched_pinv(&self) -> &DMatrix<f64> {
        &self.lt_pinv
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn query(&self) -> DVector<f64> {
        self.zt.clone()
    }

    pub fn apply_diff(&mut self, diff: &[EdgeDiff]) -> Result<()> {
        if diff.is_empty() {
            return Ok(());
        }
        self.lt += sketch_diff(&self.phi, &self.psi, diff);
        self.lt_pinv = pseudoinverse(&self.lt)?;
        self.zt = &self.lt_pinv * &self.bt;
        Ok(())
    }

    pub fn update_b(&mut self, nz: &[(usize, f64)]) -> Result<()> {
        sparse_check(self.b.len(), nz)?;
        let dbt = self.phi.apply_sparse(nz)?;
        for &(i, x) in nz {
            self.b[i] += x;
        }
        self.zt += &self.lt_pinv * &dbt;
        self.bt += dbt;
        Ok(())
    }

    /// `(Lt, bt, zt)` recomputed densely from `l_h` and the current `b`.
    pub fn scratch(&self, l_h: &DenseLaplacian) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
        let lt = self.phi.matrix() * &l_h.matrix * self.psi.matrix().transpose();
        let bt = self.phi.matrix() * &self.b;
        let zt = pseudoinverse(&lt)? * &bt;
        Ok((lt, bt, zt))
    }
}

/// Multiply structure: a sparsifier plus the sketch of its product with `v`.
#[derive(Debug, Clone)]
pub struct MultiplyState {
    dgs: FullyDynamicSparsifier,
    sketch: MultiplySketch,
}

impl MultiplyState {
    pub fn init(points: PointSet, kernel: KernelFunction, v: &[f64], spars: SparsifierConfig, sk: SketchConfig) -> Result<Self> {
        let n = points.len();
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: v.len() });
        }
        let dgs = FullyDynamicSparsifier::new(points, kernel, spars)?;
        let (phi, psi) = make_sketch_pair(n, sk.eps, sk.delta, sk.c_sk, sk.seed)?;
        let sketch = MultiplySketch::new(phi, psi, dgs.graph().edges(), v)?;
        Ok(MultiplyState { dgs, sketch })
    }

    pub fn sparsifier(&self) -> &FullyDynamicSparsifier {
        &self.dgs
    }

    pub fn sketch(&self) -> &MultiplySketch {
        &self.sketch
    }

    pub fn query(&self) -> DVector<f64> {
        self.sketch.query()
    }

    /// Moves point `i` and folds the resulting edge changes into the sketch.
    pub fn update_g(&mut self, i: usize, z: &[f64]) -> Result<()> {
        self.dgs.update(i, z)?;
        let diff = self.dgs.get_diff();
        self.sketch.apply_diff(&diff);
        Ok(())
    }

    pub fn update_v(&mut self, nz: &[(usize, f64)]) -> Result<()> {
        self.sketch.update_v(nz)
    }

    pub fn scratch(&self) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        self.sketch.scratch(&self.dgs.get_laplacian())
    }
}

/// Solve structure: a sparsifier plus the sketched solve against `b`.
#[derive(Debug, Clone)]
pub struct SolveState {
    dgs: FullyDynamicSparsifier,
    sketch: SolveSketch,
}

impl SolveState {
    pub fn init(points: PointSet, kernel: KernelFunction, b: &[f64], spars: SparsifierConfig, sk: SketchConfig) -> Result<Self> {
        let n = points.len();
        if b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: b.len() });
        }
        let dgs = FullyDynamicSparsifier::new(points, kernel, spars)?;
        let (phi, psi) = make_sketch_pair(n, sk.eps, sk.delta, sk.c_sk, sk.seed)?;
        let sketch = SolveSketch::new(phi, psi, dgs.graph().edges(), b)?;
        Ok(SolveState { dgs, sketch })
    }

    pub fn sparsifier(&self) -> &FullyDynamicSparsifier {
        &self.dgs
    }

    pub fn sketch(&self) -> &SolveSketch {
        &self.sketch
    }

    pub fn query(&self) -> DVector<f64> {
        self.sketch.query()
    }

    pub fn update_g(&mut self, i: usize, z: &[f64]) -> Result<()> {
        self.dgs.update(i, z)?;
        let diff = self.dgs.get_diff();
        self.sketch.apply_diff(&diff)
    }

    pub fn update_b(&mut self, nz: &[(usize, f64)]) -> Result<()> {
        self.sketch.update_b(nz)
    }

    pub fn scratch(&self) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
        self.sketch.scratch(&self.dgs.get_laplacian())
    }
}

/// `||a - b|| / ||b||`, or `||a||` when `b` vanishes.
pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let nb = b.norm();
    let d = (a - b).norm();
    if nb == 0.0 {
        d
    } else {
        d / nb
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditReport {
    pub multiply_error: f64,
    pub solve_error: f64,
    pub multiply_bound: f64,
    pub solve_bound: f64,
    pub multiply_ok: bool,
    pub solve_ok: bool,
}

/// Unsketched errors of `L_H` against `L_G`:
/// `|L_H v - L_G v|_{L_G^+} / |L_G v|_{L_G^+}` and
/// `|L_H^+ b - L_G^+ b|_{L_G} / |L_G^+ b|_{L_G}`.
pub fn approximation_audit(lg: &DenseLaplacian, lh: &DenseLaplacian, v: &[f64], b: &[f64], eps: f64) -> Result<AuditReport> {
    let g_pinv = laplacian_pseudoinverse(lg)?;
    let h_pinv = laplacian_pseudoinverse(lh)?;
    let v = DVector::from_column_slice(v);
    let b = DVector::from_column_slice(b);
    let norm_in = |m: &DMatrix<f64>, x: &DVector<f64>| x.dot(&(m * x)).max(0.0).sqrt();

    let gv = &lg.matrix * &v;
    let hv = &lh.matrix * &v;
    let denom = norm_in(&g_pinv, &gv);
    let multiply_error = if denom == 0.0 { 0.0 } else { norm_in(&g_pinv, &(&hv - &gv)) / denom };

    let xg = &g_pinv * &b;
    let xh = &h_pinv * &b;
    let denom = norm_in(&lg.matrix, &xg);
    let solve_error = if denom == 0.0 { 0.0 } else { norm_in(&lg.matrix, &(&xh - &xg)) / denom };

    let multiply_bound = eps;
    let solve_bound = 2.0 * eps / (1.0 - eps);
    Ok(AuditReport {
        multiply_error,
        solve_error,
        multiply_bound,
        solve_bound,
        multiply_ok: multiply_error <= multiply_bound + 1e-9,
        solve_ok: solve_error <= solve_bound + 1e-9,
    })
}
