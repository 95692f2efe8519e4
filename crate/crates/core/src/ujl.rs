//! Distance estimation from a very low-dimensional projection.
//!
//! Every stored point is kept only through its `k`-dimensional image; a
//! query returns `u_i = n^(1/k) * sqrt(d/k) * |x~_i - Pi q|`, which with high
//! probability lies between `|q - x_i|` and `n^(c/k) |q - x_i|`.

use crate::error::{Error, Result};
use crate::projection::UltraJlMap;

/// Exponent constant of the upper distortion `D = n^(c/k)`.
pub const DEFAULT_UPPER_C: f64 = 2.0;

/// `round(sqrt(log2 n))`, at least 1.
pub fn ujl_dim(n: usize) -> usize {
    ((n.max(1) as f64).log2().sqrt().round() as usize).max(1)
}

/// Upper distortion `n^(c/k)`.
pub fn upper_distortion(n: usize, k: usize, c: f64) -> f64 {
    (n as f64).powf(c / k as f64)
}

#[derive(Debug, Clone)]
pub struct UltraJlStore {
    points: Vec<Vec<f64>>,
    projected: Vec<Vec<f64>>,
    map: UltraJlMap,
    /// Accepted for interface parity; the estimator never reads it.
    eps: f64,
    factor: f64,
}

impl UltraJlStore {
    pub fn init(points: Vec<Vec<f64>>, eps: f64, seed: u64) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::EmptyInput(0));
        }
        let d = points[0].len();
        if d == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if let Some(p) = points.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: p.len() });
        }
        let log_n = (n.max(2) as f64).log2();
        if (d as f64) < 0.5 * log_n || (d as f64) > 2.0 * log_n {
            log::warn!("dimension {d} is far from log2(n) = {log_n:.1}");
        }
        let k = ujl_dim(n);
        let map = UltraJlMap::unchecked(d, k, seed);
        let projected = points.iter().map(|p| map.project_unchecked(p)).collect();
        let factor = (n as f64).powf(1.0 / k as f64) * (d as f64 / k as f64).sqrt();
        Ok(UltraJlStore { points, projected, map, eps, factor })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn d(&self) -> usize {
        self.map.d()
    }

    pub fn k(&self) -> usize {
        self.map.k()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn map(&self) -> &UltraJlMap {
        &self.map
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn projected(&self, i: usize) -> &[f64] {
        &self.projected[i]
    }

    /// The multiplier `n^(1/k) sqrt(d/k)`.
    pub fn factor(&self) -> f64 {
        self.factor
    }

    pub fn update(&mut self, i: usize, z: &[f64]) -> Result<()> {
        if i >= self.n() {
            return Err(Error::IndexOutOfRange { index: i, len: self.n() });
        }
        self.projected[i] = self.map.project(z)?;
        self.points[i] = z.to_vec();
        Ok(())
    }

    pub fn query(&self, q: &[f64]) -> Result<Vec<f64>> {
        let pq = self.map.project(q)?;
        Ok(self
            .projected
            .iter()
            .map(|x| self.factor * x.iter().zip(&pq).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .collect())
    }
}

/// Outcome of checking estimates against exact distances.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EstimateCheck {
    pub below: usize,
    pub above: usize,
    pub total: usize,
}

impl EstimateCheck {
    pub fn failures(&self) -> usize {
        self.below + self.above
    }

    pub fn failure_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.failures() as f64 / self.total as f64
        }
    }
}

/// Counts estimates outside `[|q - x_i|, upper * |q - x_i|]`.
pub fn check_estimates(store: &UltraJlStore, q: &[f64], u: &[f64], upper: f64) -> EstimateCheck {
    let mut c = EstimateCheck { total: u.len(), ..Default::default() };
    for (i, &ui) in u.iter().enumerate() {
        let dist = store.point(i).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if ui < dist * (1.0 - 1e-12) {
            c.below += 1;
        } else if ui > upper * dist * (1.0 + 1e-12) {
            c.above += 1;
        }
    }
    c
}

/// Index of the point whose estimate is most distorted relative to the
/// admissible band, measured as `max(dist/u, u/(upper*dist))`.
pub fn worst_point(store: &UltraJlStore, q: &[f64], u: &[f64], upper: f64) -> Option<usize> {
    let mut best = None;
    let mut worst = f64::NEG_INFINITY;
    for (i, &ui) in u.iter().enumerate() {
        let dist = store.point(i).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist == 0.0 {
            continue;
        }
        let score = if ui == 0.0 { f64::INFINITY } else { (dist / ui).max(ui / (upper * dist)) };
        if score > worst {
            worst = score;
            best = Some(i);
        }
    }
    best
}
