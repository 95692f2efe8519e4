//! Compressed quad tree over points of the unit cube `[0,1)^k`.
//!
//! Cells are dyadic and identified by integer grid coordinates, so two trees
//! over the same point set compare equal structurally no matter which order
//! the points arrived in. Internal nodes are exactly the smallest cells that
//! split their points into at least two quadrants; the root is always the
//! level-0 cell once there are two or more points (it may then have a single
//! child).

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Largest supported dimension of the projected space.
pub const MAX_TREE_DIM: usize = 8;

/// Number of binary refinement levels available per axis.
pub const MAX_LEVEL: u32 = 64;

type Grid = [u64; MAX_TREE_DIM];

const GRID_SCALE: f64 = 18_446_744_073_709_551_616.0; // 2^64

/// A dyadic cell: side `2^-level`, origin on the `2^-level` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub level: u8,
    pub origin: [u64; MAX_TREE_DIM],
}

impl Cell {
    pub const ROOT: Cell = Cell { level: 0, origin: [0; MAX_TREE_DIM] };

    fn of(g: &Grid, level: u32) -> Cell {
        let mut origin = [0u64; MAX_TREE_DIM];
        for (o, &x) in origin.iter_mut().zip(g) {
            *o = shr(x, MAX_LEVEL - level);
        }
        Cell { level: level as u8, origin }
    }

    fn contains(&self, g: &Grid, k: usize) -> bool {
        (0..k).all(|j| shr(g[j], MAX_LEVEL - self.level as u32) == self.origin[j])
    }

    /// Side length `2^-level`.
    pub fn side(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn center(&self, k: usize) -> [f64; MAX_TREE_DIM] {
        let side = self.side();
        let mut c = [0.0; MAX_TREE_DIM];
        for (cj, &o) in c.iter_mut().zip(&self.origin).take(k) {
            *cj = (o as f64 + 0.5) * side;
        }
        c
    }
}

fn shr(x: u64, by: u32) -> u64 {
    x.checked_shr(by).unwrap_or(0)
}

/// Tree node identity. Leaves are named by the point they hold, internal
/// nodes by their cell, so identities survive unrelated mutations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKey {
    Cell(Cell),
    Leaf(usize),
}

impl NodeKey {
    pub fn is_leaf(&self) -> bool {
        matches!(self, NodeKey::Leaf(_))
    }
}

#[derive(Debug, Clone)]
struct Node {
    parent: Option<NodeKey>,
    /// `(quadrant, child)` sorted by quadrant.
    children: Vec<(u32, NodeKey)>,
    count: usize,
}

#[derive(Debug, Clone)]
struct StoredPoint {
    grid: Grid,
    coords: [f64; MAX_TREE_DIM],
}

/// Result of a point location query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// The point is stored in this leaf.
    Leaf(NodeKey),
    /// The point is absent; a leaf for it would hang below this node (after
    /// possibly splitting the edge to one of its children).
    InsertionParent(NodeKey),
    EmptyTree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertCase {
    /// The tree was empty and the point became the root.
    Root,
    /// The new leaf hangs directly below an existing node.
    ChildOfExisting,
    /// A new internal node was placed on an existing edge.
    SplitCompressedEdge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InsertReport {
    pub case: InsertCase,
    pub parent: Option<NodeKey>,
    pub created: Vec<NodeKey>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeleteReport {
    pub removed: Vec<NodeKey>,
    /// Internal nodes spliced out, each with the child that took its place.
    pub promoted: Vec<(NodeKey, NodeKey)>,
}

#[derive(Debug, Clone)]
pub struct CompressedQuadTree {
    k: usize,
    root: Option<NodeKey>,
    nodes: HashMap<NodeKey, Node>,
    points: HashMap<usize, StoredPoint>,
}

fn to_grid(p: &[f64], k: usize) -> Result<(Grid, [f64; MAX_TREE_DIM])> {
    if p.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: p.len() });
    }
    let mut g = [0u64; MAX_TREE_DIM];
    let mut c = [0.0; MAX_TREE_DIM];
    for j in 0..k {
        if !(0.0..1.0).contains(&p[j]) {
            return Err(Error::PointOutOfRange);
        }
        g[j] = (p[j] * GRID_SCALE) as u64;
        c[j] = p[j];
    }
    Ok((g, c))
}

/// Number of leading grid bits shared by `a` and `b` on every axis.
fn common_level(a: &Grid, b: &Grid, k: usize) -> u32 {
    (0..k).map(|j| (a[j] ^ b[j]).leading_zeros()).min().unwrap_or(MAX_LEVEL)
}

fn quadrant_of_grid(g: &Grid, cell: &Cell, k: usize) -> u32 {
    let shift = MAX_LEVEL - 1 - cell.level as u32;
    (0..k).fold(0, |q, j| q | ((((g[j] >> shift) & 1) as u32) << j))
}

fn quadrant_of_cell(child: &Cell, cell: &Cell, k: usize) -> u32 {
    let shift = (child.level - cell.level - 1) as u32;
    (0..k).fold(0, |q, j| q | ((((child.origin[j] >> shift) & 1) as u32) << j))
}

impl CompressedQuadTree {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 || k > MAX_TREE_DIM {
            return Err(Error::BadDimension { k, d: MAX_TREE_DIM });
        }
        Ok(CompressedQuadTree { k, root: None, nodes: HashMap::new(), points: HashMap::new() })
    }

    /// Canonical construction by recursive subdivision.
    pub fn build<'a, I>(k: usize, points: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, &'a [f64])>,
    {
        let mut tree = Self::new(k)?;
        let mut seen: HashMap<Grid, usize> = HashMap::new();
        let mut ids = Vec::new();
        for (id, p) in points {
            let (grid, coords) = to_grid(p, k)?;
            if let Some(&other) = seen.get(&grid) {
                let same = tree.points[&other].coords[..k] == coords[..k];
                return Err(if same {
                    Error::DuplicatePoint { first: other, second: id }
                } else {
                    Error::AspectRatioTooLarge
                });
            }
            if tree.points.insert(id, StoredPoint { grid, coords }).is_some() {
                return Err(Error::InvalidParameter(format!("point id {id} given twice")));
            }
            seen.insert(grid, id);
            ids.push(id);
        }
        match ids.len() {
            0 => {}
            1 => {
                let key = NodeKey::Leaf(ids[0]);
                tree.nodes.insert(key, Node { parent: None, children: vec![], count: 1 });
                tree.root = Some(key);
            }
            _ => {
                let root = NodeKey::Cell(Cell::ROOT);
                tree.nodes.insert(root, Node { parent: None, children: vec![], count: ids.len() });
                tree.root = Some(root);
                tree.build_children(Cell::ROOT, ids);
            }
        }
        Ok(tree)
    }

    fn build_children(&mut self, cell: Cell, ids: Vec<usize>) {
        let mut groups: Vec<(u32, Vec<usize>)> = Vec::new();
        for id in ids {
            let q = quadrant_of_grid(&self.points[&id].grid, &cell, self.k);
            match groups.iter_mut().find(|(gq, _)| *gq == q) {
                Some((_, g)) => g.push(id),
                None => groups.push((q, vec![id])),
            }
        }
        groups.sort_by_key(|(q, _)| *q);
        let parent = NodeKey::Cell(cell);
        for (q, group) in groups {
            let child = self.build_subtree(parent, group);
            self.nodes.get_mut(&parent).unwrap().children.push((q, child));
        }
    }

    fn build_subtree(&mut self, parent: NodeKey, ids: Vec<usize>) -> NodeKey {
        if ids.len() == 1 {
            let key = NodeKey::Leaf(ids[0]);
            self.nodes.insert(key, Node { parent: Some(parent), children: vec![], count: 1 });
            return key;
        }
        let g0 = self.points[&ids[0]].grid;
        let level = ids[1..]
            .iter()
            .map(|id| common_level(&g0, &self.points[id].grid, self.k))
            .min()
            .unwrap();
        let cell = Cell::of(&g0, level);
        let key = NodeKey::Cell(cell);
        self.nodes.insert(key, Node { parent: Some(parent), children: vec![], count: ids.len() });
        self.build_children(cell, ids);
        key
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn root(&self) -> Option<NodeKey> {
        self.root
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains_node(&self, key: &NodeKey) -> bool {
        self.nodes.contains_key(key)
    }

    pub fn contains_point(&self, id: usize) -> bool {
        self.points.contains_key(&id)
    }

    /// Normalized coordinates of a stored point.
    pub fn point(&self, id: usize) -> Option<&[f64]> {
        self.points.get(&id).map(|p| &p.coords[..self.k])
    }

    pub fn children(&self, key: &NodeKey) -> impl Iterator<Item = NodeKey> + '_ {
        self.nodes.get(key).into_iter().flat_map(|n| n.children.iter().map(|(_, c)| *c))
    }

    pub fn parent(&self, key: &NodeKey) -> Option<NodeKey> {
        self.nodes.get(key).and_then(|n| n.parent)
    }

    /// Number of points below `key` (0 for unknown nodes).
    pub fn count(&self, key: &NodeKey) -> usize {
        self.nodes.get(key).map_or(0, |n| n.count)
    }

    /// Nodes from `key` up to and including the root.
    pub fn path_to_root(&self, key: NodeKey) -> Vec<NodeKey> {
        let mut path = Vec::new();
        let mut cur = Some(key);
        while let Some(k) = cur {
            if !self.nodes.contains_key(&k) {
                break;
            }
            path.push(k);
            cur = self.parent(&k);
        }
        path
    }

    /// Point ids stored below `key`, in preorder.
    pub fn points_under(&self, key: &NodeKey) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.count(key));
        let mut stack = vec![*key];
        while let Some(k) = stack.pop() {
            match k {
                NodeKey::Leaf(id) => out.push(id),
                NodeKey::Cell(_) => {
                    if let Some(n) = self.nodes.get(&k) {
                        stack.extend(n.children.iter().rev().map(|(_, c)| *c));
                    }
                }
            }
        }
        out
    }

    /// Side length used to choose which node to split (0 for leaves).
    pub fn side(&self, key: &NodeKey) -> f64 {
        match key {
            NodeKey::Cell(c) => c.side(),
            NodeKey::Leaf(_) => 0.0,
        }
    }

    /// Center and radius of the ball enclosing the node: the circumscribed
    /// ball of the cell, or the point itself for a leaf.
    pub fn ball(&self, key: &NodeKey) -> ([f64; MAX_TREE_DIM], f64) {
        match key {
            NodeKey::Cell(c) => (c.center(self.k), c.side() * (self.k as f64).sqrt() / 2.0),
            NodeKey::Leaf(id) => (self.points[id].coords, 0.0),
        }
    }

    /// Finds the leaf holding `p`, or the node a new leaf for `p` would hang below.
    pub fn locate(&self, p: &[f64]) -> Result<Location> {
        let (grid, _) = to_grid(p, self.k)?;
        Ok(self.locate_grid(&grid))
    }

    fn locate_grid(&self, grid: &Grid) -> Location {
        let Some(root) = self.root else {
            return Location::EmptyTree;
        };
        let mut cur = match root {
            NodeKey::Leaf(id) => {
                return if self.points[&id].grid == *grid {
                    Location::Leaf(root)
                } else {
                    Location::InsertionParent(NodeKey::Cell(Cell::ROOT))
                };
            }
            NodeKey::Cell(c) => c,
        };
        loop {
            let q = quadrant_of_grid(grid, &cur, self.k);
            let node = &self.nodes[&NodeKey::Cell(cur)];
            match node.children.iter().find(|(cq, _)| *cq == q).map(|(_, c)| *c) {
                None => return Location::InsertionParent(NodeKey::Cell(cur)),
                Some(NodeKey::Leaf(id)) => {
                    return if self.points[&id].grid == *grid {
                        Location::Leaf(NodeKey::Leaf(id))
                    } else {
                        Location::InsertionParent(NodeKey::Cell(cur))
                    };
                }
                Some(NodeKey::Cell(c)) if c.contains(grid, self.k) => cur = c,
                Some(NodeKey::Cell(_)) => return Location::InsertionParent(NodeKey::Cell(cur)),
            }
        }
    }

    fn set_child(&mut self, parent: NodeKey, q: u32, child: NodeKey) {
        let node = self.nodes.get_mut(&parent).unwrap();
        match node.children.binary_search_by_key(&q, |(cq, _)| *cq) {
            Ok(pos) => node.children[pos].1 = child,
            Err(pos) => node.children.insert(pos, (q, child)),
        }
        self.nodes.get_mut(&child).unwrap().parent = Some(parent);
    }

    fn quadrant_in(&self, child: &NodeKey, cell: &Cell) -> u32 {
        match child {
            NodeKey::Leaf(id) => quadrant_of_grid(&self.points[id].grid, cell, self.k),
            NodeKey::Cell(c) => quadrant_of_cell(c, cell, self.k),
        }
    }

    fn bump_counts(&mut self, from: Option<NodeKey>, delta: isize) {
        let mut cur = from;
        while let Some(k) = cur {
            let node = self.nodes.get_mut(&k).unwrap();
            node.count = (node.count as isize + delta) as usize;
            cur = node.parent;
        }
    }

    pub fn insert(&mut self, id: usize, p: &[f64]) -> Result<InsertReport> {
        let (grid, coords) = to_grid(p, self.k)?;
        if self.points.contains_key(&id) {
            return Err(Error::InvalidParameter(format!("point id {id} already stored")));
        }
        if let Location::Leaf(NodeKey::Leaf(other)) = self.locate_grid(&grid) {
            let same = self.points[&other].coords[..self.k] == coords[..self.k];
            return Err(if same { Error::DuplicatePoint { first: other, second: id } } else { Error::AspectRatioTooLarge });
        }
        self.points.insert(id, StoredPoint { grid, coords });
        let leaf = NodeKey::Leaf(id);
        let mut created = Vec::new();

        let root_cell = match self.root {
            None => {
                self.nodes.insert(leaf, Node { parent: None, children: vec![], count: 1 });
                self.root = Some(leaf);
                return Ok(InsertReport { case: InsertCase::Root, parent: None, created: vec![leaf] });
            }
            Some(NodeKey::Leaf(only)) => {
                let root = NodeKey::Cell(Cell::ROOT);
                self.nodes.insert(root, Node { parent: None, children: vec![], count: 1 });
                let q = self.quadrant_in(&NodeKey::Leaf(only), &Cell::ROOT);
                self.set_child(root, q, NodeKey::Leaf(only));
                self.root = Some(root);
                created.push(root);
                Cell::ROOT
            }
            Some(NodeKey::Cell(c)) => c,
        };

        let mut cur = root_cell;
        loop {
            let q = quadrant_of_grid(&grid, &cur, self.k);
            let cur_key = NodeKey::Cell(cur);
            let existing = self.nodes[&cur_key].children.iter().find(|(cq, _)| *cq == q).map(|(_, c)| *c);
            match existing {
                None => {
                    self.nodes.insert(leaf, Node { parent: Some(cur_key), children: vec![], count: 1 });
                    self.set_child(cur_key, q, leaf);
                    self.bump_counts(Some(cur_key), 1);
                    created.push(leaf);
                    return Ok(InsertReport { case: InsertCase::ChildOfExisting, parent: Some(cur_key), created });
                }
                Some(NodeKey::Cell(c)) if c.contains(&grid, self.k) => {
                    cur = c;
                }
                Some(other) => {
                    let level = match other {
                        NodeKey::Leaf(oid) => common_level(&grid, &self.points[&oid].grid, self.k),
                        NodeKey::Cell(c) => {
                            let shift = MAX_LEVEL - c.level as u32;
                            (0..self.k)
                                .map(|j| (shr(grid[j], shift) ^ c.origin[j]).leading_zeros() - shift)
                                .min()
                                .unwrap()
                        }
                    };
                    let w_cell = Cell::of(&grid, level);
                    let w = NodeKey::Cell(w_cell);
                    let other_count = self.count(&other);
                    self.nodes.insert(w, Node { parent: Some(cur_key), children: vec![], count: other_count + 1 });
                    self.set_child(cur_key, q, w);
                    let oq = self.quadrant_in(&other, &w_cell);
                    self.set_child(w, oq, other);
                    self.nodes.insert(leaf, Node { parent: Some(w), children: vec![], count: 1 });
                    let lq = quadrant_of_grid(&grid, &w_cell, self.k);
                    self.set_child(w, lq, leaf);
                    self.bump_counts(Some(cur_key), 1);
                    created.push(w);
                    created.push(leaf);
                    return Ok(InsertReport { case: InsertCase::SplitCompressedEdge, parent: Some(cur_key), created });
                }
            }
        }
    }

    pub fn delete(&mut self, id: usize) -> Result<DeleteReport> {
        if !self.points.contains_key(&id) {
            return Err(Error::UnknownPoint(id));
        }
        let leaf = NodeKey::Leaf(id);
        let node = self.nodes.remove(&leaf).unwrap();
        self.points.remove(&id);
        let mut removed = vec![leaf];
        let Some(parent) = node.parent else {
            self.root = None;
            return Ok(DeleteReport { removed, promoted: Vec::new() });
        };
        self.nodes.get_mut(&parent).unwrap().children.retain(|(_, c)| *c != leaf);
        self.bump_counts(Some(parent), -1);

        let pnode = &self.nodes[&parent];
        let mut promoted = Vec::new();
        if let (Some(grand), 1) = (pnode.parent, pnode.children.len()) {
            let only = pnode.children[0].1;
            let NodeKey::Cell(gcell) = grand else { unreachable!("internal nodes are cells") };
            self.nodes.remove(&parent);
            let q = self.quadrant_in(&only, &gcell);
            self.set_child(grand, q, only);
            removed.push(parent);
            promoted.push((parent, only));
        }
        // a single remaining point becomes the root on its own
        let root = self.root.unwrap();
        if !root.is_leaf() && self.nodes[&root].count == 1 {
            let only = self.nodes[&root].children[0].1;
            self.nodes.remove(&root);
            self.nodes.get_mut(&only).unwrap().parent = None;
            self.root = Some(only);
            removed.push(root);
            promoted.push((root, only));
        }
        Ok(DeleteReport { removed, promoted })
    }

    /// Deterministic preorder dump: one node per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let Some(root) = self.root else {
            return out;
        };
        let mut stack = vec![(root, 0usize)];
        while let Some((key, depth)) = stack.pop() {
            let node = &self.nodes[&key];
            let indent = "  ".repeat(depth);
            match key {
                NodeKey::Cell(c) => {
                    let origin: Vec<String> = c.origin[..self.k].iter().map(|o| o.to_string()).collect();
                    let _ = writeln!(out, "{indent}cell level={} origin=({}) count={}", c.level, origin.join(","), node.count);
                }
                NodeKey::Leaf(id) => {
                    let g: Vec<String> = self.points[&id].grid[..self.k].iter().map(|x| format!("{x:016x}")).collect();
                    let _ = writeln!(out, "{indent}leaf id={id} grid=({})", g.join(","));
                }
            }
            for (_, c) in node.children.iter().rev() {
                stack.push((*c, depth + 1));
            }
        }
        out
    }

    /// Longest root-to-leaf path, counted in edges.
    pub fn height(&self) -> usize {
        self.points.keys().map(|&id| self.path_to_root(NodeKey::Leaf(id)).len() - 1).max().unwrap_or(0)
    }

    /// Checks parent links, counts and the compression invariant.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let Some(root) = self.root else {
            return if self.nodes.is_empty() && self.points.is_empty() { Ok(()) } else { Err("orphans in empty tree".into()) };
        };
        let mut leaves = 0;
        for (key, node) in &self.nodes {
            match key {
                NodeKey::Leaf(id) => {
                    leaves += 1;
                    if node.count != 1 || !node.children.is_empty() || !self.points.contains_key(id) {
                        return Err(format!("bad leaf {key:?}"));
                    }
                }
                NodeKey::Cell(c) => {
                    let sum: usize = node.children.iter().map(|(_, ch)| self.count(ch)).sum();
                    if sum != node.count || node.count < 2 {
                        return Err(format!("bad count at {key:?}"));
                    }
                    if *key != root && node.children.len() < 2 {
                        return Err(format!("uncompressed chain at {key:?}"));
                    }
                    for (q, ch) in &node.children {
                        if self.nodes[ch].parent != Some(*key) {
                            return Err(format!("parent link broken at {ch:?}"));
                        }
                        if self.quadrant_in(ch, c) != *q {
                            return Err(format!("child {ch:?} in wrong quadrant"));
                        }
                        if let NodeKey::Cell(cc) = ch {
                            if cc.level <= c.level {
                                return Err(format!("child {ch:?} not below {key:?}"));
                            }
                        }
                    }
                }
            }
        }
        if leaves != self.points.len() {
            return Err("leaf count mismatch".into());
        }
        Ok(())
    }
}
