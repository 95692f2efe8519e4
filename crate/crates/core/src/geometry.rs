//! Points, kernels and dense reference Laplacians.
//!
//! Everything dense in this module is meant for verification at desk scale:
//! the dynamic structures never build an `n x n` matrix themselves.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform scale + translation carrying raw coordinates into `[0,1)^d`.
///
/// The raw bounding box is scaled by `1 / (2 * maxside)` and centred at
/// `0.5`, so every input point lands in `[0.25, 0.75]^d` and moves anywhere
/// inside the unit cube remain representable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingTransform {
    pub center: Vec<f64>,
    pub scale: f64,
}

impl BoundingTransform {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.center)
            .map(|(x, c)| (x - c) * self.scale + 0.5)
            .collect()
    }

    pub fn invert(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(&self.center)
            .map(|(u, c)| (u - 0.5) / self.scale + c)
            .collect()
    }
}

fn in_unit_cube(p: &[f64]) -> bool {
    p.iter().all(|&x| (0.0..1.0).contains(&x))
}

fn bits_key(p: &[f64]) -> Vec<u64> {
    // -0.0 and 0.0 are the same location
    p.iter().map(|&x| (x + 0.0).to_bits()).collect()
}

/// The mutable point set `P`, stored in normalized coordinates.
#[derive(Debug, Clone)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    transform: BoundingTransform,
    lookup: HashMap<Vec<u64>, usize>,
}

impl PointSet {
    /// Normalizes raw input into the unit cube.
    pub fn normalize(raw: &[Vec<f64>]) -> Result<Self> {
        if raw.len() < 2 {
            return Err(Error::EmptyInput(raw.len()));
        }
        let dim = raw[0].len();
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for (i, p) in raw.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(i));
            }
            for j in 0..dim {
                lo[j] = lo[j].min(p[j]);
                hi[j] = hi[j].max(p[j]);
            }
        }
        let maxside = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
        let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let scale = if maxside > 0.0 { 1.0 / (2.0 * maxside) } else { 1.0 };
        let transform = BoundingTransform { center, scale };

        let mut set = PointSet {
            dim,
            coords: Vec::with_capacity(raw.len() * dim),
            transform,
            lookup: HashMap::with_capacity(raw.len()),
        };
        for (i, p) in raw.iter().enumerate() {
            if let Some(&first) = set.lookup.get(&bits_key(p)) {
                return Err(Error::DuplicatePoint { first, second: i });
            }
            set.lookup.insert(bits_key(p), i);
        }
        // the lookup is keyed by normalized coordinates from here on
        set.lookup.clear();
        for (i, p) in raw.iter().enumerate() {
            let u = set.transform.apply(p);
            debug_assert!(in_unit_cube(&u));
            if let Some(&first) = set.lookup.get(&bits_key(&u)) {
                // distinct raw points collapsed by rounding
                return Err(Error::DuplicatePoint { first, second: i });
            }
            set.lookup.insert(bits_key(&u), i);
            set.coords.extend_from_slice(&u);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn transform(&self) -> &BoundingTransform {
        &self.transform
    }

    /// Normalized coordinates of point `i`.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn raw_point(&self, i: usize) -> Vec<f64> {
        self.transform.invert(self.point(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn raw_points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.raw_point(i)).collect()
    }

    /// Squared distance between points `i` and `j` in raw units.
    pub fn raw_distance_sq(&self, i: usize, j: usize) -> f64 {
        let s = sq_dist(self.point(i), self.point(j));
        s / (self.transform.scale * self.transform.scale)
    }

    /// Id of the point stored at exactly these normalized coordinates.
    pub fn find(&self, unit: &[f64]) -> Option<usize> {
        self.lookup.get(&bits_key(unit)).copied()
    }

    /// Maps a raw location into normalized coordinates, checking region and
    /// collisions for a move of point `i`.
    pub fn check_move(&self, i: usize, raw: &[f64]) -> Result<Vec<f64>> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange { index: i, len: self.len() });
        }
        if raw.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: raw.len() });
        }
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let unit = self.transform.apply(raw);
        if !in_unit_cube(&unit) {
            return Err(Error::OutOfRegion(i));
        }
        match self.find(&unit) {
            Some(j) if j != i => Err(Error::DuplicatePoint { first: j, second: i }),
            _ => Ok(unit),
        }
    }

    /// Overwrites point `i` with already-normalized coordinates.
    pub fn set_unit(&mut self, i: usize, unit: &[f64]) {
        let old = bits_key(self.point(i));
        self.lookup.remove(&old);
        self.coords[i * self.dim..(i + 1) * self.dim].copy_from_slice(unit);
        self.lookup.insert(bits_key(unit), i);
    }

    pub fn aspect_ratio(&self) -> f64 {
        aspect_ratio(&self.raw_points())
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Brute-force `max d(x,y) / min d(x,y)` over distinct pairs.
pub fn aspect_ratio(points: &[Vec<f64>]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = sq_dist(&points[i], &points[j]).sqrt();
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    if lo == 0.0 || !lo.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// `f(t) = exp(-t)`
    Exponential,
    /// `f(t) = 1/t`
    Inverse,
    /// `f(t) = 1/(1+t)`
    Cauchy,
}

/// A radial kernel `K(u,v) = f(|u-v|^2)` with its multiplicative Lipschitz
/// parameters `(C, L)`: `c^-L <= f(c t)/f(t) <= c^L` for `c` in `[1/C, C]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelFunction {
    pub kind: KernelKind,
    pub lipschitz_c: f64,
    pub lipschitz_l: f64,
}

impl KernelFunction {
    /// `exp(-t)` is only Lipschitz on a bounded range `t <= t_max`; over
    /// `c in [1/C, C]` the tight exponent is `t_max * max(1, (C-1)/ln C)`.
    pub fn exponential(lipschitz_c: f64, t_max: f64) -> Self {
        let c = lipschitz_c.max(1.0 + 1e-12);
        let l = t_max * f64::max(1.0, (c - 1.0) / c.ln());
        KernelFunction { kind: KernelKind::Exponential, lipschitz_c: c, lipschitz_l: l.max(1.0) }
    }

    /// `1/t` is `(C, 1)`-Lipschitz for every `C`.
    pub fn inverse() -> Self {
        KernelFunction { kind: KernelKind::Inverse, lipschitz_c: f64::INFINITY, lipschitz_l: 1.0 }
    }

    /// `1/(1+t)` is `(C, 1)`-Lipschitz for every `C`.
    pub fn cauchy() -> Self {
        KernelFunction { kind: KernelKind::Cauchy, lipschitz_c: f64::INFINITY, lipschitz_l: 1.0 }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "exp" | "exponential" | "gaussian" => Some(Self::exponential(2.0, 1.0)),
            "inverse" | "gravity" => Some(Self::inverse()),
            "cauchy" => Some(Self::cauchy()),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            KernelKind::Exponential => "exp",
            KernelKind::Inverse => "inverse",
            KernelKind::Cauchy => "cauchy",
        }
    }

    /// The radial profile `f(t)` at squared distance `t`.
    pub fn profile(&self, t: f64) -> f64 {
        match self.kind {
            KernelKind::Exponential => (-t).exp(),
            KernelKind::Inverse => 1.0 / t,
            KernelKind::Cauchy => 1.0 / (1.0 + t),
        }
    }

    pub fn weight(&self, u: &[f64], v: &[f64]) -> f64 {
        self.profile(sq_dist(u, v))
    }
}

/// Weight of the edge `(i, j)` of the kernel graph on `points`.
pub fn kernel_weight(points: &PointSet, kernel: &KernelFunction, i: usize, j: usize) -> f64 {
    kernel.profile(points.raw_distance_sq(i, j))
}

/// Dense symmetric Laplacian `D - W`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLaplacian {
    pub matrix: DMatrix<f64>,
}

impl DenseLaplacian {
    pub fn zeros(n: usize) -> Self {
        DenseLaplacian { matrix: DMatrix::zeros(n, n) }
    }

    pub fn from_edges<I>(n: usize, edges: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut l = Self::zeros(n);
        for (i, j, w) in edges {
            l.add_edge(i, j, w);
        }
        l
    }

    pub fn add_edge(&mut self, i: usize, j: usize, w: f64) {
        let m = &mut self.matrix;
        m[(i, i)] += w;
        m[(j, j)] += w;
        m[(i, j)] -= w;
        m[(j, i)] -= w;
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        v.dot(&(&self.matrix * &v))
    }

    pub fn scaled(&self, c: f64) -> Self {
        DenseLaplacian { matrix: &self.matrix * c }
    }

    pub fn max_row_sum_abs(&self) -> f64 {
        self.matrix.row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max)
    }
}

/// Exact Laplacian of the complete kernel graph.
pub fn dense_laplacian(points: &PointSet, kernel: &KernelFunction) -> DenseLaplacian {
    let n = points.len();
    let mut l = DenseLaplacian::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            l.add_edge(i, j, kernel_weight(points, kernel, i, j));
        }
    }
    l
}

/// Orthonormal basis of the complement of the all-ones vector (Helmert
/// columns), as an `n x (n-1)` matrix.
pub fn ones_complement_basis(n: usize) -> DMatrix<f64> {
    let mut v = DMatrix::zeros(n, n.saturating_sub(1));
    for j in 1..n {
        let jf = j as f64;
        let norm = (jf * (jf + 1.0)).sqrt();
        for i in 0..j {
            v[(i, j - 1)] = 1.0 / norm;
        }
        v[(j, j - 1)] = -jf / norm;
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub passed: bool,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

pub const SPECTRAL_TOL: f64 = 1e-7;

/// Extreme generalized eigenvalues of `(l_h, l_g)` on the complement of the
/// all-ones vector.
pub fn relative_spectrum(l_g: &DenseLaplacian, l_h: &DenseLaplacian) -> Result<(f64, f64)> {
    let n = l_g.n();
    if l_h.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: l_h.n() });
    }
    if n < 2 {
        return Err(Error::EmptyInput(n));
    }
    let v = ones_complement_basis(n);
    let g = v.transpose() * &l_g.matrix * &v;
    let h = v.transpose() * &l_h.matrix * &v;
    let g = symmetrize(g);
    let chol = g.cholesky().ok_or(Error::SingularMatrix)?;
    let lower = chol.l();
    let y = lower
        .solve_lower_triangular(&symmetrize(h))
        .ok_or_else(|| Error::NumericalFailure("triangular solve".into()))?;
    let z = lower
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::NumericalFailure("triangular solve".into()))?;
    let m = symmetrize(z);
    let eig = SymmetricEigen::try_new(m, 1e-14, 10_000)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolve did not converge".into()))?;
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// Checks `(1-eps) L_G <= L_H <= (1+eps) L_G` up to [`SPECTRAL_TOL`].
pub fn check_spectral_sparsifier(
    l_g: &DenseLaplacian,
    l_h: &DenseLaplacian,
    eps: f64,
) -> Result<SpectralReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps={eps} not in (0,1)")));
    }
    let (lo, hi) = relative_spectrum(l_g, l_h)?;
    Ok(SpectralReport {
        passed: lo >= 1.0 - eps - SPECTRAL_TOL && hi <= 1.0 + eps + SPECTRAL_TOL,
        min_ratio: lo,
        max_ratio: hi,
    })
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Moore-Penrose pseudoinverse of a Laplacian via its eigendecomposition.
/// Errors with `SingularMatrix` when the kernel has dimension above one.
pub fn laplacian_pseudoinverse(l: &DenseLaplacian) -> Result<DMatrix<f64>> {
    let n = l.n();
    let eig = SymmetricEigen::try_new(symmetrize(l.matrix.clone()), 1e-14, 10_000)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolve did not converge".into()))?;
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let cutoff = top * 1e-12 * n as f64;
    let zeros = eig.eigenvalues.iter().filter(|&&e| e.abs() <= cutoff).count();
    if zeros > 1 || top == 0.0 {
        return Err(Error::SingularMatrix);
    }
    let mut pinv = DMatrix::zeros(n, n);
    for (k, &e) in eig.eigenvalues.iter().enumerate() {
        if e.abs() > cutoff {
            let u = eig.eigenvectors.column(k);
            pinv += (u * u.transpose()) / e;
        }
    }
    Ok(pinv)
}

/// Weighted leverage scores `w_e (e_i - e_j)^T L_G^+ (e_i - e_j)`.
pub fn brute_force_leverage_scores(
    l_g: &DenseLaplacian,
    edges: &[(usize, usize, f64)],
) -> Result<Vec<f64>> {
    let pinv = laplacian_pseudoinverse(l_g)?;
    Ok(edges
        .iter()
        .map(|&(i, j, w)| w * (pinv[(i, i)] + pinv[(j, j)] - 2.0 * pinv[(i, j)]))
        .collect())
}
