//! Uniform edge samples of bicliques and resampling after one side changes.
//!
//! A biclique `A x B` is never materialized; an edge is addressed by its
//! index `r * |B| + c`, and the parts of a changed biclique are described as
//! unions of such rectangles.

use std::collections::{BTreeSet, HashSet};

use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric};

pub type Edge = (usize, usize);

/// A set of distinct edges `(i, j)` with `i` from the left side and `j` from
/// the right side of a biclique.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeSample {
    pub edges: BTreeSet<Edge>,
    pub target: usize,
}

impl EdgeSample {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Disjoint union of rectangles `rows x cols`, indexed contiguously.
struct Slabs<'a> {
    parts: Vec<(&'a [usize], &'a [usize])>,
}

impl<'a> Slabs<'a> {
    fn size(&self) -> usize {
        self.parts.iter().map(|(r, c)| r.len() * c.len()).sum()
    }

    fn edge(&self, mut idx: usize) -> Edge {
        for (rows, cols) in &self.parts {
            let sz = rows.len() * cols.len();
            if idx < sz {
                return (rows[idx / cols.len()], cols[idx % cols.len()]);
            }
            idx -= sz;
        }
        unreachable!("slab index out of range")
    }

    /// `count` distinct edges, uniformly.
    fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R, out: &mut BTreeSet<Edge>) {
        let size = self.size();
        if count >= size {
            for idx in 0..size {
                out.insert(self.edge(idx));
            }
            return;
        }
        for idx in index::sample(rng, size, count) {
            out.insert(self.edge(idx));
        }
    }

    /// `count` distinct edges uniformly among those not in `skip`. `skip`
    /// must be a subset of the slabs.
    fn sample_excluding<R: Rng + ?Sized>(&self, count: usize, skip: &HashSet<Edge>, rng: &mut R, out: &mut BTreeSet<Edge>) {
        if count == 0 {
            return;
        }
        let size = self.size();
        let free = size - skip.len();
        if 2 * (count + skip.len()) >= size {
            let pool: Vec<Edge> = (0..size).map(|i| self.edge(i)).filter(|e| !skip.contains(e)).collect();
            for i in index::sample(rng, free, count.min(free)) {
                out.insert(pool[i]);
            }
            return;
        }
        let mut taken = 0;
        let mut seen = HashSet::with_capacity(count);
        while taken < count {
            let e = self.edge(rng.random_range(0..size));
            if !skip.contains(&e) && seen.insert(e) {
                out.insert(e);
                taken += 1;
            }
        }
    }
}

/// `s` distinct uniform edges of `a x b` (all of them when `s >= |a||b|`).
pub fn rand_sample<R: Rng + ?Sized>(a: &[usize], b: &[usize], s: usize, rng: &mut R) -> EdgeSample {
    let mut edges = BTreeSet::new();
    Slabs { parts: vec![(a, b)] }.sample(s, rng, &mut edges);
    EdgeSample { edges, target: s }
}

/// Exact binomial variate: coin flips for small `trials`, otherwise
/// inversion of the CDF.
pub fn binomial_draw<R: Rng + ?Sized>(trials: usize, prob: f64, rng: &mut R) -> usize {
    if prob <= 0.0 {
        return 0;
    }
    if prob >= 1.0 {
        return trials;
    }
    if trials <= 64 {
        return (0..trials).filter(|_| rng.random_bool(prob)).count();
    }
    if prob > 0.5 {
        return trials - binomial_draw(trials, 1.0 - prob, rng);
    }
    let q = 1.0 - prob;
    let mut pmf = q.powi(trials as i32);
    if pmf < 1e-300 {
        // (1-p)^n underflows; fall back to the library sampler
        return Binomial::new(trials as u64, prob).expect("valid binomial").sample(rng) as usize;
    }
    let ratio = prob / q;
    let u: f64 = rng.random();
    let mut cdf = pmf;
    let mut k = 0;
    while u > cdf && k < trials {
        pmf *= ratio * (trials - k) as f64 / (k + 1) as f64;
        k += 1;
        cdf += pmf;
    }
    k
}

/// Number of marked items in a uniform `draws`-subset of `population` items
/// of which `marked` are marked.
pub fn hypergeometric_draw<R: Rng + ?Sized>(population: usize, marked: usize, draws: usize, rng: &mut R) -> usize {
    if marked == 0 || draws == 0 {
        return 0;
    }
    Hypergeometric::new(population as u64, marked as u64, draws as u64).expect("valid hypergeometric").sample(rng) as usize
}

/// Parts of the new biclique relative to the old one.
struct Split {
    a_keep: Vec<usize>,
    a_new: Vec<usize>,
    b_keep: Vec<usize>,
    b_new: Vec<usize>,
}

impl Split {
    fn new(a: &[usize], b: &[usize], a2: &[usize], b2: &[usize]) -> Self {
        let sa: HashSet<usize> = a.iter().copied().collect();
        let sb: HashSet<usize> = b.iter().copied().collect();
        let (a_keep, a_new) = a2.iter().partition(|x| sa.contains(x));
        let (b_keep, b_new) = b2.iter().partition(|x| sb.contains(x));
        Split { a_keep, a_new, b_keep, b_new }
    }

    fn overlap(&self) -> Slabs<'_> {
        Slabs { parts: vec![(&self.a_keep, &self.b_keep)] }
    }

    /// `(A' x B') \ (A x B)` as two slabs.
    fn fresh<'a>(&'a self, b2: &'a [usize]) -> Slabs<'a> {
        Slabs { parts: vec![(&self.a_new, b2), (&self.a_keep, &self.b_new)] }
    }
}

/// Takes `h` edges from the overlap, preferring the old sample (in random
/// order) and topping up uniformly from the rest of the overlap.
fn take_overlap<R: Rng + ?Sized>(
    old_in: &[Edge],
    overlap: &Slabs<'_>,
    h: usize,
    rng: &mut R,
    out: &mut BTreeSet<Edge>,
) {
    if h <= old_in.len() {
        for i in index::sample(rng, old_in.len(), h) {
            out.insert(old_in[i]);
        }
    } else {
        out.extend(old_in.iter().copied());
        let skip: HashSet<Edge> = old_in.iter().copied().collect();
        overlap.sample_excluding(h - old_in.len(), &skip, rng, out);
    }
}

fn old_in_overlap(e: &EdgeSample, split: &Split) -> Vec<Edge> {
    let ka: HashSet<usize> = split.a_keep.iter().copied().collect();
    let kb: HashSet<usize> = split.b_keep.iter().copied().collect();
    e.edges.iter().copied().filter(|(i, j)| ka.contains(i) && kb.contains(j)).collect()
}

/// Converts a uniform sample of `a x b` into one of `a2 x b2` by drawing
/// each output edge from the overlap or from the new part with probability
/// proportional to what remains in each.
pub fn resample_linear<R: Rng + ?Sized>(
    e: &EdgeSample,
    a: &[usize],
    b: &[usize],
    a2: &[usize],
    b2: &[usize],
    s: usize,
    rng: &mut R,
) -> EdgeSample {
    let split = Split::new(a, b, a2, b2);
    let overlap = split.overlap();
    let fresh = split.fresh(b2);
    let (mut left_o, mut left_n) = (overlap.size(), fresh.size());
    let target = s.min(left_o + left_n);
    let mut h = 0;
    for _ in 0..target {
        if rng.random_range(0..left_o + left_n) < left_o {
            h += 1;
            left_o -= 1;
        } else {
            left_n -= 1;
        }
    }
    let mut edges = BTreeSet::new();
    take_overlap(&old_in_overlap(e, &split), &overlap, h, rng, &mut edges);
    fresh.sample(target - h, rng, &mut edges);
    EdgeSample { edges, target: s }
}

/// Converts a uniform sample of `a x b` into one of `a2 x b2`, drawing the
/// number of new-part edges from its exact (hypergeometric) law and keeping
/// as much of the old sample as possible. For `s` small against the
/// biclique this is the binomial `Binomial(s, |new| / |a2 x b2|)`. Returns the sample and `|new sample \triangle old|`.
pub fn resample_fast<R: Rng + ?Sized>(
    e: &EdgeSample,
    a: &[usize],
    b: &[usize],
    a2: &[usize],
    b2: &[usize],
    s: usize,
    rng: &mut R,
) -> (EdgeSample, usize) {
    let split = Split::new(a, b, a2, b2);
    let overlap = split.overlap();
    let fresh = split.fresh(b2);
    let (n_o, n_new) = (overlap.size(), fresh.size());
    let total = n_o + n_new;
    let mut edges = BTreeSet::new();
    if s >= total {
        Slabs { parts: vec![(a2, b2)] }.sample(total, rng, &mut edges);
    } else {
        let x = hypergeometric_draw(total, n_new, s, rng);
        take_overlap(&old_in_overlap(e, &split), &overlap, s - x, rng, &mut edges);
        fresh.sample(x, rng, &mut edges);
    }
    let churn = edges.symmetric_difference(&e.edges).count();
    (EdgeSample { edges, target: s }, churn)
}
