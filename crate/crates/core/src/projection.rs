//! Gaussian random projections: the ultra-low-dimensional map used to place
//! points in the quad tree, and the pair of sketch matrices used by the
//! Laplacian sketches.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Fills a `rows x cols` matrix with i.i.d. `N(0, 1) * scale` entries drawn
/// row-major from the given stream.
pub(crate) fn gaussian_matrix(rows: usize, cols: usize, scale: f64, seed: u64, stream: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
        .collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

/// `k x d` matrix with i.i.d. `N(0, 1/k)` entries, so squared norms are
/// preserved in expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct UltraJlMap {
    matrix: DMatrix<f64>,
    seed: u64,
}

impl UltraJlMap {
    pub fn new(d: usize, k: usize, seed: u64) -> Result<Self> {
        if k == 0 || k >= d {
            return Err(Error::BadDimension { k, d });
        }
        Ok(Self::unchecked(d, k, seed))
    }

    /// Same distribution without the `k < d` requirement.
    pub(crate) fn unchecked(d: usize, k: usize, seed: u64) -> Self {
        UltraJlMap { matrix: gaussian_matrix(k, d, 1.0 / (k as f64).sqrt(), seed, 0), seed }
    }

    pub fn k(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn d(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), found: x.len() });
        }
        Ok(self.project_unchecked(x))
    }

    pub(crate) fn project_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let m = &self.matrix;
        (0..m.nrows())
            .map(|r| (0..m.ncols()).map(|c| m[(r, c)] * x[c]).sum())
            .collect()
    }

    /// Per-coordinate bounds of the image of the unit cube `[0,1]^d`.
    pub fn unit_cube_image(&self) -> (Vec<f64>, Vec<f64>) {
        let m = &self.matrix;
        let lo = m.row_iter().map(|r| r.iter().map(|&v| v.min(0.0)).sum()).collect();
        let hi = m.row_iter().map(|r| r.iter().map(|&v| v.max(0.0)).sum()).collect();
        (lo, hi)
    }
}

/// `m x n` sketch with i.i.d. `N(0, 1/m)` entries, so `E[S^T S] = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchMatrix {
    matrix: DMatrix<f64>,
    seed: u64,
}

/// Default multiplier in `m = ceil(c * eps^-2 * ln(n / delta))`.
pub const DEFAULT_SKETCH_CONSTANT: f64 = 4.0;

pub fn sketch_rows(n: usize, eps: f64, delta: f64, c_sk: f64) -> usize {
    let m = (c_sk * (n as f64 / delta).ln() / (eps * eps)).ceil();
    (m as usize).max(1)
}

impl SketchMatrix {
    pub fn new(rows: usize, cols: usize, seed: u64, stream: u64) -> Self {
        SketchMatrix { matrix: gaussian_matrix(rows, cols, 1.0 / (rows as f64).sqrt(), seed, stream), seed }
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, x: &[f64]) -> DVector<f64> {
        &self.matrix * DVector::from_column_slice(x)
    }

    /// `S * x` for a sparse `x` given as `(index, value)` pairs.
    pub fn apply_sparse(&self, nz: &[(usize, f64)]) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.rows());
        for &(j, v) in nz {
            if j >= self.cols() {
                return Err(Error::IndexOutOfRange { index: j, len: self.cols() });
            }
            out.axpy(v, &self.matrix.column(j), 1.0);
        }
        Ok(out)
    }
}

/// Two independent sketches `(Phi, Psi)` drawn from separate streams of the
/// same seed.
pub fn make_sketch_pair(n: usize, eps: f64, delta: f64, c_sk: f64, seed: u64) -> Result<(SketchMatrix, SketchMatrix)> {
    if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("eps={eps}, delta={delta} must lie in (0,1)")));
    }
    let m = sketch_rows(n, eps, delta, c_sk);
    Ok((SketchMatrix::new(m, n, seed, 1), SketchMatrix::new(m, n, seed, 2)))
}
