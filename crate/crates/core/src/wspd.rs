//! Well-separated pair decomposition over a compressed quad tree, kept in
//! sync with the tree as points move.
//!
//! The decomposition is the greedy recursion started at `(root, root)`. The
//! recursion itself is stored as a call tree so that after a move only the
//! calls involving nodes on the old or new root-to-leaf path of the moved
//! point are recomputed; untouched calls keep their whole subtree.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::quadtree::{CompressedQuadTree, Location, NodeKey};

/// Separation used for the projected-space decomposition.
pub const SEPARATION: f64 = 2.0;

pub type PairKey = (NodeKey, NodeKey);

#[derive(Debug, Clone, PartialEq, Eq)]
enum Call {
    Emit,
    /// A leaf paired with itself: covers no point pair.
    Nothing,
    Split(Vec<PairKey>),
}

/// One entry of the modified-pair list produced by a move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModifiedPair {
    pub before: Option<PairKey>,
    pub after: Option<PairKey>,
    /// `after` lists the counterpart of `before.1` first.
    pub swapped: bool,
}

/// `true` iff the enclosing balls of `u` and `v` are at distance at least
/// `s` times the larger radius.
pub fn well_separated(tree: &CompressedQuadTree, u: &NodeKey, v: &NodeKey, s: f64) -> bool {
    if u == v {
        return false;
    }
    let (cu, ru) = tree.ball(u);
    let (cv, rv) = tree.ball(v);
    let r = ru.max(rv);
    let dist = cu.iter().zip(&cv).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    dist - 2.0 * r >= s * r
}

fn decide(tree: &CompressedQuadTree, u: NodeKey, v: NodeKey, s: f64) -> Call {
    if u == v {
        if u.is_leaf() {
            return Call::Nothing;
        }
        let kids: Vec<NodeKey> = tree.children(&u).collect();
        let mut calls = Vec::with_capacity(kids.len() * (kids.len() + 1) / 2);
        for i in 0..kids.len() {
            for j in i..kids.len() {
                calls.push((kids[i], kids[j]));
            }
        }
        return Call::Split(calls);
    }
    if well_separated(tree, &u, &v, s) {
        return Call::Emit;
    }
    if tree.side(&u) >= tree.side(&v) {
        Call::Split(tree.children(&u).map(|c| (c, v)).collect())
    } else {
        Call::Split(tree.children(&v).map(|c| (u, c)).collect())
    }
}

#[derive(Debug, Clone)]
pub struct Wspd {
    s: f64,
    calls: HashMap<PairKey, Call>,
    pairs: BTreeSet<PairKey>,
    node_index: HashMap<NodeKey, BTreeSet<PairKey>>,
    root_call: Option<PairKey>,
}

impl Wspd {
    /// Runs the recursion from `(root, root)`.
    pub fn compute(tree: &CompressedQuadTree) -> Self {
        Self::compute_with_separation(tree, SEPARATION)
    }

    pub fn compute_with_separation(tree: &CompressedQuadTree, s: f64) -> Self {
        let mut w = Wspd { s, calls: HashMap::new(), pairs: BTreeSet::new(), node_index: HashMap::new(), root_call: None };
        if let Some(root) = tree.root() {
            w.root_call = Some((root, root));
            let mut added = Vec::new();
            w.expand(tree, (root, root), &HashSet::new(), &mut HashSet::new(), &mut added);
        }
        w
    }

    pub fn separation(&self) -> f64 {
        self.s
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &BTreeSet<PairKey> {
        &self.pairs
    }

    pub fn contains(&self, key: &PairKey) -> bool {
        self.pairs.contains(key)
    }

    /// Pairs that have `node` on either side.
    pub fn pairs_of(&self, node: &NodeKey) -> impl Iterator<Item = &PairKey> {
        self.node_index.get(node).into_iter().flatten()
    }

    fn add_pair(&mut self, key: PairKey) {
        self.pairs.insert(key);
        self.node_index.entry(key.0).or_default().insert(key);
        self.node_index.entry(key.1).or_default().insert(key);
    }

    fn remove_pair(&mut self, key: &PairKey) {
        self.pairs.remove(key);
        for node in [key.0, key.1] {
            if let Some(set) = self.node_index.get_mut(&node) {
                set.remove(key);
                if set.is_empty() {
                    self.node_index.remove(&node);
                }
            }
        }
    }

    /// Runs the recursion below `start`, reusing stored calls whose nodes are
    /// both outside `dirty`.
    fn expand(
        &mut self,
        tree: &CompressedQuadTree,
        start: PairKey,
        dirty: &HashSet<NodeKey>,
        reused: &mut HashSet<PairKey>,
        added: &mut Vec<PairKey>,
    ) {
        let mut stack = vec![start];
        while let Some(call) = stack.pop() {
            let clean = !dirty.contains(&call.0) && !dirty.contains(&call.1);
            if clean && self.calls.contains_key(&call) {
                reused.insert(call);
                continue;
            }
            let result = decide(tree, call.0, call.1, self.s);
            match &result {
                Call::Emit => {
                    self.add_pair(call);
                    added.push(call);
                }
                Call::Split(children) => stack.extend(children.iter().rev().copied()),
                Call::Nothing => {}
            }
            self.calls.insert(call, result);
        }
    }

    /// Deletes `start` and every call below it, skipping calls in `keep`.
    fn drop_subtree(&mut self, start: PairKey, keep: &HashSet<PairKey>, removed: &mut Vec<PairKey>) {
        let mut stack = vec![start];
        while let Some(call) = stack.pop() {
            if keep.contains(&call) {
                continue;
            }
            match self.calls.remove(&call) {
                Some(Call::Emit) => {
                    self.remove_pair(&call);
                    removed.push(call);
                }
                Some(Call::Split(children)) => stack.extend(children),
                _ => {}
            }
        }
    }

    /// Moves point `id` to `new_pos`, updating the tree and the decomposition
    /// together, and returns every pair whose point sets changed, matched
    /// before/after where a counterpart exists.
    pub fn move_point(&mut self, tree: &mut CompressedQuadTree, id: usize, new_pos: &[f64]) -> Result<Vec<ModifiedPair>> {
        let Some(old_pos) = tree.point(id).map(|p| p.to_vec()) else {
            return Err(Error::UnknownPoint(id));
        };
        if let Location::Leaf(NodeKey::Leaf(other)) = tree.locate(new_pos)? {
            if other != id {
                return Err(Error::DuplicatePoint { first: other, second: id });
            }
            if old_pos == new_pos {
                return Ok(Vec::new());
            }
        }

        let leaf = NodeKey::Leaf(id);
        let old_path = tree.path_to_root(leaf);
        let mut touched_before: BTreeSet<PairKey> = BTreeSet::new();
        for node in &old_path {
            touched_before.extend(self.pairs_of(node).copied());
        }

        let del = tree.delete(id)?;
        let ins = match tree.insert(id, new_pos) {
            Ok(r) => r,
            Err(e) => {
                tree.insert(id, &old_pos).expect("restoring the previous position");
                return Err(e);
            }
        };
        let new_path = tree.path_to_root(leaf);

        let mut dirty: HashSet<NodeKey> = old_path.iter().chain(&new_path).copied().collect();
        dirty.extend(del.removed.iter().copied());
        dirty.extend(ins.created.iter().copied());

        // detach every stored call that involves a dirty node
        let mut removed = Vec::new();
        let mut detached = Vec::new();
        if let Some(root_call) = self.root_call.take() {
            let mut stack = vec![root_call];
            while let Some(call) = stack.pop() {
                if !dirty.contains(&call.0) && !dirty.contains(&call.1) {
                    detached.push(call);
                    continue;
                }
                match self.calls.remove(&call) {
                    Some(Call::Emit) => {
                        self.remove_pair(&call);
                        removed.push(call);
                    }
                    Some(Call::Split(children)) => stack.extend(children),
                    _ => {}
                }
            }
        }

        let mut reused = HashSet::new();
        let mut added = Vec::new();
        if let Some(root) = tree.root() {
            self.root_call = Some((root, root));
            self.expand(tree, (root, root), &dirty, &mut reused, &mut added);
        }
        for call in detached {
            self.drop_subtree(call, &reused, &mut removed);
        }

        let removed: BTreeSet<PairKey> = removed.into_iter().collect();
        let added: BTreeSet<PairKey> = added.into_iter().collect();
        let mut touched: BTreeSet<PairKey> = touched_before;
        for node in &new_path {
            touched.extend(self.pairs_of(node).copied());
        }
        touched.extend(removed.intersection(&added).copied());

        let mut out = Vec::new();
        for key in &touched {
            if self.pairs.contains(key) && !(added.contains(key) && !removed.contains(key)) {
                out.push(ModifiedPair { before: Some(*key), after: Some(*key), swapped: false });
            }
        }

        // counterparts in the tree with the point absent
        let mut promoted: HashMap<NodeKey, NodeKey> = del.promoted.iter().copied().collect();
        promoted.insert(leaf, leaf);
        let phi = |mut x: NodeKey| -> Option<NodeKey> {
            if x == leaf {
                return None;
            }
            while let Some(&next) = promoted.get(&x) {
                if next == leaf {
                    return None;
                }
                x = next;
            }
            Some(x)
        };
        let created: HashSet<NodeKey> = ins.created.iter().copied().collect();
        let psi = |mut y: NodeKey| -> Option<NodeKey> {
            loop {
                if y == leaf {
                    return None;
                }
                if !created.contains(&y) {
                    return Some(y);
                }
                let kids: Vec<NodeKey> = tree.children(&y).filter(|c| *c != leaf).collect();
                if kids.len() != 1 {
                    return None;
                }
                y = kids[0];
            }
        };

        let gone: Vec<PairKey> = removed.difference(&added).copied().collect();
        let fresh: Vec<PairKey> = added.difference(&removed).copied().collect();
        let mut by_image: HashMap<PairKey, PairKey> = HashMap::new();
        let mut ambiguous: HashSet<PairKey> = HashSet::new();
        for key in &gone {
            if let (Some(a), Some(b)) = (phi(key.0), phi(key.1)) {
                if by_image.insert((a, b), *key).is_some() {
                    ambiguous.insert((a, b));
                }
            }
        }
        for image in &ambiguous {
            by_image.remove(image);
        }
        let mut matched: HashSet<PairKey> = HashSet::new();
        for key in &fresh {
            let hit = match (psi(key.0), psi(key.1)) {
                (Some(a), Some(b)) => {
                    if let Some(old) = by_image.remove(&(a, b)) {
                        Some((old, false))
                    } else {
                        by_image.remove(&(b, a)).map(|old| (old, true))
                    }
                }
                _ => None,
            };
            match hit {
                Some((old, swapped)) => {
                    matched.insert(old);
                    out.push(ModifiedPair { before: Some(old), after: Some(*key), swapped });
                }
                None => out.push(ModifiedPair { before: None, after: Some(*key), swapped: false }),
            }
        }
        for key in gone {
            if !matched.contains(&key) {
                out.push(ModifiedPair { before: Some(key), after: None, swapped: false });
            }
        }
        Ok(out)
    }

    /// Separation and index consistency.
    pub fn validate(&self, tree: &CompressedQuadTree) -> std::result::Result<(), String> {
        for key in &self.pairs {
            if !tree.contains_node(&key.0) || !tree.contains_node(&key.1) {
                return Err(format!("pair {key:?} references a missing node"));
            }
            if !well_separated(tree, &key.0, &key.1, self.s) {
                return Err(format!("pair {key:?} is not well separated"));
            }
            for node in [key.0, key.1] {
                if !self.node_index.get(&node).is_some_and(|s| s.contains(key)) {
                    return Err(format!("node index misses {key:?}"));
                }
            }
        }
        for (node, set) in &self.node_index {
            for key in set {
                if !self.pairs.contains(key) || (key.0 != *node && key.1 != *node) {
                    return Err(format!("stale node index entry {key:?}"));
                }
            }
        }
        Ok(())
    }

    /// One pair per line, sorted.
    pub fn dump(&self, tree: &CompressedQuadTree) -> String {
        let k = tree.k();
        let name = |n: &NodeKey| match n {
            NodeKey::Cell(c) => {
                let o: Vec<String> = c.origin[..k].iter().map(|x| x.to_string()).collect();
                format!("({},{})", c.level, o.join(","))
            }
            NodeKey::Leaf(id) => format!("(leaf,{id})"),
        };
        let mut out = String::new();
        for key in &self.pairs {
            let _ = writeln!(out, "({},{})", name(&key.0), name(&key.1));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadtree::Cell;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tree_of(k: usize, pts: &[Vec<f64>]) -> CompressedQuadTree {
        CompressedQuadTree::build(k, pts.iter().enumerate().map(|(i, p)| (i, p.as_slice()))).unwrap()
    }

    fn coverage(tree: &CompressedQuadTree, w: &Wspd, n: usize) {
        let mut hits = vec![0u32; n * n];
        for (a, b) in w.pairs() {
            for i in tree.points_under(a) {
                for j in tree.points_under(b) {
                    assert_ne!(i, j);
                    hits[i.min(j) * n + i.max(j)] += 1;
                }
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                assert_eq!(hits[i * n + j], 1, "pair ({i},{j})");
            }
        }
    }

    #[test]
    fn two_points_give_one_pair() {
        let t = tree_of(2, &[vec![0.1, 0.1], vec![0.9, 0.9]]);
        let w = Wspd::compute(&t);
        assert_eq!(w.len(), 1);
        let (a, b) = *w.pairs().iter().next().unwrap();
        assert!(a.is_leaf() && b.is_leaf());
    }

    #[test]
    fn collinear_three_points() {
        let t = tree_of(1, &[vec![0.0], vec![0.5], vec![0.51]]);
        let w = Wspd::compute(&t);
        coverage(&t, &w, 3);
        w.validate(&t).unwrap();
    }

    #[test]
    fn separation_predicate() {
        let t = tree_of(1, &[vec![0.0], vec![0.5], vec![0.75]]);
        assert!(well_separated(&t, &NodeKey::Leaf(0), &NodeKey::Leaf(1), 100.0));
        assert!(!well_separated(&t, &NodeKey::Leaf(0), &NodeKey::Leaf(0), 2.0));
        // adjacent level-1 cells [0,.5) and [.5,1): center distance .5, radius .25
        let left = NodeKey::Cell(Cell { level: 1, origin: [0; 8] });
        let mut o = [0; 8];
        o[0] = 1;
        let right = NodeKey::Cell(Cell { level: 1, origin: o });
        assert!(!well_separated(&t, &left, &right, 2.0));
    }

    #[test]
    fn random_points_cover_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec<f64>> = (0..100).map(|_| (0..2).map(|_| rng.random::<f64>()).collect()).collect();
        let t = tree_of(2, &pts);
        let w = Wspd::compute(&t);
        let total: usize = w.pairs().iter().map(|(a, b)| t.count(a) * t.count(b)).sum();
        assert_eq!(total, 100 * 99 / 2);
        coverage(&t, &w, 100);
        w.validate(&t).unwrap();
    }

    #[test]
    fn move_to_same_place_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pts: Vec<Vec<f64>> = (0..30).map(|_| (0..2).map(|_| rng.random::<f64>()).collect()).collect();
        let mut t = tree_of(2, &pts);
        let mut w = Wspd::compute(&t);
        let before = w.dump(&t);
        assert!(w.move_point(&mut t, 3, &pts[3]).unwrap().is_empty());
        assert_eq!(w.dump(&t), before);
        assert!(matches!(w.move_point(&mut t, 3, &pts[4]), Err(Error::DuplicatePoint { .. })));
        assert!(matches!(w.move_point(&mut t, 99, &pts[4]), Err(Error::UnknownPoint(99))));
    }

    #[test]
    fn moves_match_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 60;
        let mut pts: Vec<Vec<f64>> = (0..n).map(|_| (0..2).map(|_| rng.random::<f64>()).collect()).collect();
        let mut t = tree_of(2, &pts);
        let mut w = Wspd::compute(&t);
        for step in 0..150 {
            let id = rng.random_range(0..n);
            let p: Vec<f64> = if step % 3 == 0 {
                pts[rng.random_range(0..n)].iter().map(|x| (x + 1e-3 * rng.random::<f64>()).min(0.999)).collect()
            } else {
                (0..2).map(|_| rng.random::<f64>()).collect()
            };
            let before: BTreeSet<PairKey> = w.pairs().clone();
            let modified = w.move_point(&mut t, id, &p).unwrap();
            pts[id] = p;
            let fresh = Wspd::compute(&t);
            assert_eq!(w.pairs(), fresh.pairs(), "step {step}");
            w.validate(&t).unwrap();
            // every changed pair is reported
            let after = w.pairs();
            for k in before.symmetric_difference(after) {
                assert!(modified.iter().any(|m| m.before == Some(*k) || m.after == Some(*k)), "step {step}: {k:?}");
            }
            for m in &modified {
                if let Some(b) = m.before {
                    assert!(before.contains(&b));
                }
                if let Some(a) = m.after {
                    assert!(after.contains(&a));
                }
            }
        }
        coverage(&t, &w, n);
    }
}
