//! A single robust random cut tree.
//!
//! Construction recursively picks a cut dimension with probability
//! proportional to its range over the current point set and a cut value
//! uniform on that range; points with `coord <= cut` go left. Streaming
//! insertion and deletion keep the tree distributed as if it had been built
//! from scratch on the current point set.
//!
//! Nodes live in an arena with a free list; their boxes sit in one flat
//! `f64` array indexed by slot. Coincident points collapse into
//! a single leaf that carries every id mapped onto it; a leaf's weight is its
//! multiplicity.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_dim, validate_coords, BoundingBox, Point};
use crate::rng::{coords_key, RngStream, StreamRng};
use crate::PointId;

const QUERY_STREAM: u64 = 0x0071_7565_7279;

/// Arena links are `u32`; `NIL` marks a missing parent or an unset child.
const NIL: u32 = u32::MAX;

fn link(idx: usize) -> u32 {
    debug_assert!(idx < NIL as usize);
    idx as u32
}

fn opt_link(idx: Option<usize>) -> u32 {
    idx.map_or(NIL, link)
}

fn from_link(l: u32) -> Option<usize> {
    (l != NIL).then_some(l as usize)
}

#[derive(Debug, Clone)]
struct Branch {
    cut_value: f64,
    weight: u64,
    cut_dim: u32,
    left: u32,
    right: u32,
    parent: u32,
}

impl Branch {
    fn left(&self) -> usize {
        self.left as usize
    }

    fn right(&self) -> usize {
        self.right as usize
    }

    fn cut_dim(&self) -> usize {
        self.cut_dim as usize
    }
}

/// Ids mapped onto one leaf. Nearly every leaf holds exactly one, so the
/// first lives inline and the rest spill into a vector.
#[derive(Debug, Clone)]
struct LeafIds {
    first: PointId,
    rest: Vec<PointId>,
}

impl LeafIds {
    fn one(id: PointId) -> Self {
        Self { first: id, rest: Vec::new() }
    }

    fn from_vec(ids: Vec<PointId>) -> Self {
        let mut it = ids.into_iter();
        let first = it.next().expect("a leaf holds at least one id");
        Self { first, rest: it.collect() }
    }

    fn len(&self) -> usize {
        1 + self.rest.len()
    }

    fn push(&mut self, id: PointId) {
        self.rest.push(id);
    }

    /// Drops `id`; the caller keeps at least one other id.
    fn remove(&mut self, id: PointId) {
        if self.first == id {
            self.first = self.rest.remove(0);
        } else {
            self.rest.retain(|&x| x != id);
        }
    }

    fn contains(&self, id: PointId) -> bool {
        self.first == id || self.rest.contains(&id)
    }

    fn iter(&self) -> impl Iterator<Item = PointId> + '_ {
        std::iter::once(self.first).chain(self.rest.iter().copied())
    }

    fn to_vec(&self) -> Vec<PointId> {
        self.iter().collect()
    }
}

#[derive(Debug, Clone)]
struct Leaf {
    ids: LeafIds,
    parent: u32,
}

#[derive(Debug, Clone)]
enum Node {
    Branch(Branch),
    Leaf(Leaf),
    Free,
}

impl Node {
    fn parent(&self) -> Option<usize> {
        match self {
            Node::Branch(b) => from_link(b.parent),
            Node::Leaf(l) => from_link(l.parent),
            Node::Free => unreachable!("free slot reached from a live node"),
        }
    }

    fn set_parent(&mut self, parent: Option<usize>) {
        match self {
            Node::Branch(b) => b.parent = opt_link(parent),
            Node::Leaf(l) => l.parent = opt_link(parent),
            Node::Free => unreachable!("free slot reached from a live node"),
        }
    }

    fn weight(&self) -> u64 {
        match self {
            Node::Branch(b) => b.weight,
            Node::Leaf(l) => l.ids.len() as u64,
            Node::Free => 0,
        }
    }
}

enum Attach {
    Empty,
    Duplicate { depth: u64 },
    Split { weight: u64, depth: u64 },
}

/// Where a candidate cut lands relative to a node's box.
enum CutOutcome {
    /// The new point is split off on the left (`x[dim] <= cut < min[dim]`).
    SplitLeft { dim: usize, cut: f64 },
    /// The new point is split off on the right (`max[dim] <= cut < x[dim]`).
    SplitRight { dim: usize, cut: f64 },
    Descend,
}

/// Draws one cut over the box `[min, max]` extended by `x`, choosing the
/// dimension proportionally to the extended span.
fn draw_insertion_cut<R: Rng + ?Sized>(min: &[f64], max: &[f64], x: &[f64], rng: &mut R) -> CutOutcome {
    let spans: Vec<f64> = (0..x.len()).map(|i| max[i].max(x[i]) - min[i].min(x[i])).collect();
    let total: f64 = spans.iter().sum();
    if !(total > 0.0) {
        return CutOutcome::Descend;
    }
    let mut r = rng.random_range(0.0..total);
    let mut dim = spans.iter().rposition(|&s| s > 0.0).unwrap_or(0);
    for (i, &s) in spans.iter().enumerate() {
        if s > 0.0 && r < s {
            dim = i;
            break;
        }
        r -= s;
    }
    let lo = min[dim].min(x[dim]);
    let cut = lo + r.clamp(0.0, spans[dim]);
    if x[dim] <= cut && cut < min[dim] {
        CutOutcome::SplitLeft { dim, cut }
    } else if max[dim] <= cut && cut < x[dim] {
        CutOutcome::SplitRight { dim, cut }
    } else {
        CutOutcome::Descend
    }
}

/// One robust random cut tree. Owns its random stream.
#[derive(Debug, Clone)]
pub struct RandomCutTree {
    dim: usize,
    nodes: Vec<Node>,
    /// Per-slot box, `2 * dim` values: min then max. A leaf's box is its point.
    bounds: Vec<f64>,
    free: Vec<usize>,
    /// Maintained incrementally by insert and delete.
    complexity: u64,
    root: Option<usize>,
    leaves: HashMap<PointId, usize>,
    stream: RngStream,
    rng: StreamRng,
}

impl RandomCutTree {
    /// Empty tree of dimension `dim`.
    pub fn new(dim: usize, stream: RngStream) -> Self {
        Self {
            dim,
            nodes: Vec::new(),
            bounds: Vec::new(),
            free: Vec::new(),
            complexity: 0,
            root: None,
            leaves: HashMap::new(),
            stream,
            rng: stream.rng(),
        }
    }

    /// Builds a tree over `points` by recursive random cuts. Points without an
    /// id are keyed by their index in the slice.
    pub fn build(points: &[Point], stream: RngStream) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyInput)?;
        let dim = first.dim();
        let mut seen = HashSet::with_capacity(points.len());
        let mut items: Vec<(&[f64], PointId)> = Vec::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            check_dim(dim, p.dim())?;
            p.validate()?;
            let id = p.id.unwrap_or(i as PointId);
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id));
            }
            items.push((&p.coords, id));
        }
        let mut tree = Self::new(dim, stream);
        let mut rng = stream.rng();
        tree.build_from(&items, &mut rng);
        tree.rng = rng;
        Ok(tree)
    }

    fn build_from<R: Rng + ?Sized>(&mut self, items: &[(&[f64], PointId)], rng: &mut R) {
        // (member indices, parent branch, attach as left child, depth)
        let mut stack: Vec<(Vec<usize>, Option<(usize, bool)>, u64)> = vec![((0..items.len()).collect(), None, 0)];
        while let Some((members, attach, depth)) = stack.pop() {
            let parent = attach.map(|(p, _)| p);
            let mut bbox = BoundingBox::from_coords(items[members[0]].0);
            for &i in &members[1..] {
                bbox.extend(items[i].0);
            }
            let ranges = bbox.ranges();
            let total: f64 = ranges.iter().sum();
            let idx = if total > 0.0 {
                let mut r = rng.random_range(0.0..total);
                let mut dim = ranges.iter().rposition(|&s| s > 0.0).unwrap_or(0);
                for (i, &s) in ranges.iter().enumerate() {
                    if s > 0.0 && r < s {
                        dim = i;
                        break;
                    }
                    r -= s;
                }
                let cut = rng.random_range(bbox.min[dim]..bbox.max[dim]);
                let (left, right): (Vec<usize>, Vec<usize>) =
                    members.iter().partition(|&&i| items[i].0[dim] <= cut);
                let weight = members.len() as u64;
                let branch = Branch { cut_dim: dim as u32, cut_value: cut, weight, left: NIL, right: NIL, parent: opt_link(parent) };
                let idx = self.alloc(Node::Branch(branch), &bbox.min, &bbox.max);
                // Right is pushed first so the left subtree consumes draws first.
                stack.push((right, Some((idx, false)), depth + 1));
                stack.push((left, Some((idx, true)), depth + 1));
                idx
            } else {
                let mut ids: Vec<PointId> = members.iter().map(|&i| items[i].1).collect();
                ids.sort_unstable();
                self.complexity += depth * ids.len() as u64;
                let at = items[members[0]].0;
                let idx = self.alloc(Node::Leaf(Leaf { ids: LeafIds::from_vec(ids), parent: opt_link(parent) }), at, at);
                if let Node::Leaf(l) = &self.nodes[idx] {
                    for id in l.ids.iter() {
                        self.leaves.insert(id, idx);
                    }
                }
                idx
            };
            match attach {
                None => self.root = Some(idx),
                Some((p, is_left)) => {
                    if let Node::Branch(b) = &mut self.nodes[p] {
                        if is_left {
                            b.left = link(idx);
                        } else {
                            b.right = link(idx);
                        }
                    }
                }
            }
        }
    }

    fn alloc(&mut self, node: Node, min: &[f64], max: &[f64]) -> usize {
        let idx = match self.free.pop() {
            Some(i) => {
                self.nodes[i] = node;
                i
            }
            None => {
                assert!(self.nodes.len() < NIL as usize, "tree arena is limited to u32 slots");
                self.nodes.push(node);
                self.bounds.resize(self.bounds.len() + 2 * self.dim, 0.0);
                self.nodes.len() - 1
            }
        };
        let (lo, hi) = self.bounds_mut(idx);
        lo.copy_from_slice(min);
        hi.copy_from_slice(max);
        idx
    }

    fn bounds(&self, idx: usize) -> (&[f64], &[f64]) {
        let span = 2 * self.dim;
        self.bounds[idx * span..(idx + 1) * span].split_at(self.dim)
    }

    fn bounds_mut(&mut self, idx: usize) -> (&mut [f64], &mut [f64]) {
        let span = 2 * self.dim;
        self.bounds[idx * span..(idx + 1) * span].split_at_mut(self.dim)
    }

    fn release(&mut self, idx: usize) {
        self.nodes[idx] = Node::Free;
        self.free.push(idx);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of points stored, counting multiplicity.
    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }

    pub fn contains(&self, id: PointId) -> bool {
        self.leaves.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = PointId> + '_ {
        self.leaves.keys().copied()
    }

    pub fn stream(&self) -> RngStream {
        self.stream
    }

    /// Cut dimension and value of the root, if the root is a branch.
    pub fn root_cut(&self) -> Option<(usize, f64)> {
        match &self.nodes[self.root?] {
            Node::Branch(b) => Some((b.cut_dim(), b.cut_value)),
            _ => None,
        }
    }

    /// Depth (root = 0) of the leaf holding `id`.
    pub fn depth(&self, id: PointId) -> Result<usize> {
        let leaf = *self.leaves.get(&id).ok_or(Error::UnknownPointId(id))?;
        Ok(self.depth_of(leaf))
    }

    fn depth_of(&self, mut idx: usize) -> usize {
        let mut depth = 0;
        while let Some(p) = self.nodes[idx].parent() {
            depth += 1;
            idx = p;
        }
        depth
    }

    /// Multiplicity of the leaf holding `id`.
    pub fn multiplicity(&self, id: PointId) -> Result<usize> {
        let leaf = *self.leaves.get(&id).ok_or(Error::UnknownPointId(id))?;
        Ok(self.nodes[leaf].weight() as usize)
    }

    fn check_point(&self, coords: &[f64]) -> Result<()> {
        check_dim(self.dim, coords.len())?;
        validate_coords(coords)
    }

    /// Follows cuts down to the leaf whose coordinates equal `coords`.
    fn find_leaf(&self, coords: &[f64]) -> Option<usize> {
        let mut idx = self.root?;
        loop {
            match &self.nodes[idx] {
                Node::Branch(b) => {
                    idx = if coords[b.cut_dim()] <= b.cut_value { b.left() } else { b.right() };
                }
                Node::Leaf(_) => return (self.bounds(idx).0 == coords).then_some(idx),
                Node::Free => return None,
            }
        }
    }

    /// Inserts a point using the tree's own stream.
    pub fn insert(&mut self, coords: &[f64], id: PointId) -> Result<()> {
        let mut rng = self.rng.clone();
        let out = self.insert_with_rng(coords, id, &mut rng);
        self.rng = rng;
        out
    }

    /// Inserts a point drawing candidate cuts from `rng`.
    pub fn insert_with_rng<R: Rng + ?Sized>(&mut self, coords: &[f64], id: PointId, rng: &mut R) -> Result<()> {
        self.check_point(coords)?;
        if self.leaves.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        let Some(root) = self.root else {
            let idx = self.alloc(Node::Leaf(Leaf { ids: LeafIds::one(id), parent: NIL }), coords, coords);
            self.root = Some(idx);
            self.leaves.insert(id, idx);
            return Ok(());
        };
        if let Some(leaf) = self.find_leaf(coords) {
            if let Node::Leaf(l) = &mut self.nodes[leaf] {
                l.ids.push(id);
            }
            self.leaves.insert(id, leaf);
            self.complexity += self.depth_of(leaf) as u64;
            let mut up = self.nodes[leaf].parent();
            while let Some(p) = up {
                if let Node::Branch(b) = &mut self.nodes[p] {
                    b.weight += 1;
                }
                up = self.nodes[p].parent();
            }
            return Ok(());
        }

        let mut idx = root;
        let mut depth = 0u64;
        loop {
            let (min, max) = self.bounds(idx);
            let split = match draw_insertion_cut(min, max, coords, rng) {
                CutOutcome::SplitLeft { dim, cut } => Some((dim, cut, true)),
                CutOutcome::SplitRight { dim, cut } => Some((dim, cut, false)),
                CutOutcome::Descend => None,
            };
            if let Some((dim, cut, leaf_left)) = split {
                self.complexity += self.nodes[idx].weight() + depth + 1;
                self.split_off(idx, coords, id, dim, cut, leaf_left);
                return Ok(());
            }
            let (lo, hi) = self.bounds_mut(idx);
            for ((l, h), &c) in lo.iter_mut().zip(hi.iter_mut()).zip(coords) {
                *l = l.min(c);
                *h = h.max(c);
            }
            let Node::Branch(b) = &mut self.nodes[idx] else {
                unreachable!("a leaf distinct from the new point is always separable");
            };
            b.weight += 1;
            idx = if coords[b.cut_dim()] <= b.cut_value { b.left() } else { b.right() };
            depth += 1;
        }
    }

    /// Puts a new branch above `sibling`, with the new leaf on `leaf_left`'s side.
    fn split_off(&mut self, sibling: usize, coords: &[f64], id: PointId, dim: usize, cut: f64, leaf_left: bool) {
        let parent = self.nodes[sibling].parent();
        let (min, max) = self.bounds(sibling);
        let mut bbox = BoundingBox { min: min.to_vec(), max: max.to_vec() };
        bbox.extend(coords);
        let weight = self.nodes[sibling].weight() + 1;
        let node = Branch { cut_dim: dim as u32, cut_value: cut, weight, left: NIL, right: NIL, parent: opt_link(parent) };
        let branch = self.alloc(Node::Branch(node), &bbox.min, &bbox.max);
        let leaf = self.alloc(Node::Leaf(Leaf { ids: LeafIds::one(id), parent: link(branch) }), coords, coords);
        self.leaves.insert(id, leaf);
        if let Node::Branch(b) = &mut self.nodes[branch] {
            let (l, r) = if leaf_left { (leaf, sibling) } else { (sibling, leaf) };
            (b.left, b.right) = (link(l), link(r));
        }
        self.nodes[sibling].set_parent(Some(branch));
        self.replace_child(parent, sibling, branch);
    }

    fn replace_child(&mut self, parent: Option<usize>, old: usize, new: usize) {
        match parent {
            None => self.root = Some(new),
            Some(p) => {
                if let Node::Branch(b) = &mut self.nodes[p] {
                    if b.left() == old {
                        b.left = link(new);
                    } else {
                        debug_assert_eq!(b.right(), old);
                        b.right = link(new);
                    }
                }
            }
        }
    }

    /// Removes one point. A leaf with several ids loses only `id`; otherwise
    /// the leaf goes and its sibling takes its parent's place.
    pub fn delete(&mut self, id: PointId) -> Result<()> {
        let leaf = self.leaves.remove(&id).ok_or(Error::UnknownPointId(id))?;
        let depth = self.depth_of(leaf) as u64;
        let Node::Leaf(l) = &mut self.nodes[leaf] else { unreachable!("id map points at a branch") };
        if l.ids.len() > 1 {
            self.complexity -= depth;
            l.ids.remove(id);
            let mut up = from_link(l.parent);
            while let Some(p) = up {
                if let Node::Branch(b) = &mut self.nodes[p] {
                    b.weight -= 1;
                }
                up = self.nodes[p].parent();
            }
            return Ok(());
        }
        let Some(parent) = from_link(l.parent) else {
            self.release(leaf);
            self.root = None;
            return Ok(());
        };
        let Node::Branch(pb) = &self.nodes[parent] else { unreachable!("leaf parent is a branch") };
        let sibling = if pb.left() == leaf { pb.right() } else { pb.left() };
        let grand = from_link(pb.parent);
        self.complexity -= depth + self.nodes[sibling].weight();
        self.nodes[sibling].set_parent(grand);
        self.replace_child(grand, parent, sibling);
        self.release(leaf);
        self.release(parent);

        let (dim, span) = (self.dim, 2 * self.dim);
        let mut up = grand;
        while let Some(p) = up {
            let Node::Branch(b) = &mut self.nodes[p] else { unreachable!() };
            b.weight -= 1;
            let (l, r) = (b.left() * span, b.right() * span);
            up = from_link(b.parent);
            let bounds = &mut self.bounds;
            for k in 0..dim {
                bounds[p * span + k] = bounds[l + k].min(bounds[r + k]);
                bounds[p * span + dim + k] = bounds[l + dim + k].max(bounds[r + dim + k]);
            }
        }
        Ok(())
    }

    /// Sum over leaves of depth × multiplicity (root depth 0).
    pub fn model_complexity(&self) -> u64 {
        self.complexity
    }

    fn recount_complexity(&self) -> u64 {
        let Some(root) = self.root else { return 0 };
        let mut total = 0;
        let mut stack = vec![(root, 0u64)];
        while let Some((idx, depth)) = stack.pop() {
            match &self.nodes[idx] {
                Node::Branch(b) => {
                    stack.push((b.left(), depth + 1));
                    stack.push((b.right(), depth + 1));
                }
                Node::Leaf(l) => total += depth * l.ids.len() as u64,
                Node::Free => unreachable!(),
            }
        }
        total
    }

    /// Stream used by [`displacement`](Self::displacement) for `coords`.
    /// Depends only on the tree's stream and the coordinates, so scoring
    /// many candidates is order-independent.
    pub fn query_stream(&self, coords: &[f64]) -> RngStream {
        self.stream.substream(QUERY_STREAM).substream(coords_key(coords))
    }

    /// Increase in model complexity from inserting `coords`, without
    /// mutating the tree.
    pub fn displacement(&self, coords: &[f64]) -> Result<u64> {
        let mut rng = self.query_stream(coords).rng();
        self.displacement_with_rng(coords, &mut rng)
    }

    /// Same as [`displacement`](Self::displacement) with explicit draws; an
    /// `insert_with_rng` fed an identical generator changes
    /// `model_complexity` by exactly the returned amount.
    pub fn displacement_with_rng<R: Rng + ?Sized>(&self, coords: &[f64], rng: &mut R) -> Result<u64> {
        Ok(match self.simulate_insert(coords, rng)? {
            Attach::Empty => 0,
            Attach::Duplicate { depth } => depth,
            Attach::Split { weight, depth } => weight + depth + 1,
        })
    }

    /// Leaves pushed one level deeper by inserting `coords` (the weight of
    /// the node it splits off from); 0 for an exact duplicate.
    pub fn displaced_leaves(&self, coords: &[f64]) -> Result<u64> {
        let mut rng = self.query_stream(coords).rng();
        Ok(match self.simulate_insert(coords, &mut rng)? {
            Attach::Split { weight, .. } => weight,
            Attach::Empty | Attach::Duplicate { .. } => 0,
        })
    }

    fn simulate_insert<R: Rng + ?Sized>(&self, coords: &[f64], rng: &mut R) -> Result<Attach> {
        self.check_point(coords)?;
        let Some(root) = self.root else { return Ok(Attach::Empty) };
        if let Some(leaf) = self.find_leaf(coords) {
            return Ok(Attach::Duplicate { depth: self.depth_of(leaf) as u64 });
        }
        let mut idx = root;
        let mut depth = 0u64;
        loop {
            let (min, max) = self.bounds(idx);
            match draw_insertion_cut(min, max, coords, rng) {
                CutOutcome::SplitLeft { .. } | CutOutcome::SplitRight { .. } => {
                    return Ok(Attach::Split { weight: self.nodes[idx].weight(), depth });
                }
                CutOutcome::Descend => {
                    let Node::Branch(b) = &self.nodes[idx] else { unreachable!() };
                    idx = if coords[b.cut_dim()] <= b.cut_value { b.left() } else { b.right() };
                    depth += 1;
                }
            }
        }
    }

    /// Drop in model complexity from deleting `id`: the displacement the
    /// point caused when it joined the rest of the tree.
    pub fn removal_displacement(&self, id: PointId) -> Result<u64> {
        let leaf = *self.leaves.get(&id).ok_or(Error::UnknownPointId(id))?;
        let depth = self.depth_of(leaf) as u64;
        if self.nodes[leaf].weight() > 1 {
            return Ok(depth);
        }
        Ok(match self.nodes[leaf].parent() {
            None => 0,
            Some(p) => {
                let Node::Branch(b) = &self.nodes[p] else { unreachable!() };
                let sibling = if b.left() == leaf { b.right() } else { b.left() };
                depth + self.nodes[sibling].weight()
            }
        })
    }

    /// [`removal_displacement`](Self::removal_displacement) for every stored
    /// id in a single traversal.
    pub fn member_displacements(&self) -> Vec<(PointId, u64)> {
        let mut out = Vec::with_capacity(self.len());
        let Some(root) = self.root else { return out };
        // (node, depth, weight of sibling)
        let mut stack = vec![(root, 0u64, 0u64)];
        while let Some((idx, depth, sib)) = stack.pop() {
            match &self.nodes[idx] {
                Node::Branch(b) => {
                    let (lw, rw) = (self.nodes[b.left()].weight(), self.nodes[b.right()].weight());
                    stack.push((b.left(), depth + 1, rw));
                    stack.push((b.right(), depth + 1, lw));
                }
                Node::Leaf(l) => {
                    let score = if l.ids.len() > 1 { depth } else if depth == 0 { 0 } else { depth + sib };
                    out.extend(l.ids.iter().map(|id| (id, score)));
                }
                Node::Free => unreachable!(),
            }
        }
        out
    }

    /// Leaves pulled one level up by deleting `id`: its sibling's weight, or
    /// 0 when the leaf holds duplicates or is the root.
    pub fn removal_displaced_leaves(&self, id: PointId) -> Result<u64> {
        let leaf = *self.leaves.get(&id).ok_or(Error::UnknownPointId(id))?;
        if self.nodes[leaf].weight() > 1 {
            return Ok(0);
        }
        Ok(match self.nodes[leaf].parent() {
            None => 0,
            Some(p) => {
                let Node::Branch(b) = &self.nodes[p] else { unreachable!() };
                self.nodes[if b.left() == leaf { b.right() } else { b.left() }].weight()
            }
        })
    }

    /// [`removal_displaced_leaves`](Self::removal_displaced_leaves) for every
    /// stored id.
    pub fn member_displaced_leaves(&self) -> Vec<(PointId, u64)> {
        let mut out = Vec::with_capacity(self.len());
        let Some(root) = self.root else { return out };
        let mut stack = vec![(root, 0u64)];
        while let Some((idx, sib)) = stack.pop() {
            match &self.nodes[idx] {
                Node::Branch(b) => {
                    stack.push((b.left(), self.nodes[b.right()].weight()));
                    stack.push((b.right(), self.nodes[b.left()].weight()));
                }
                Node::Leaf(l) => {
                    let score = if l.ids.len() > 1 { 0 } else { sib };
                    out.extend(l.ids.iter().map(|id| (id, score)));
                }
                Node::Free => unreachable!(),
            }
        }
        out
    }

    /// Weight (leaf count) of the least common ancestor of two stored points.
    pub fn tree_distance(&self, id_a: PointId, id_b: PointId) -> Result<u64> {
        let a = *self.leaves.get(&id_a).ok_or(Error::UnknownPointId(id_a))?;
        let b = *self.leaves.get(&id_b).ok_or(Error::UnknownPointId(id_b))?;
        if a == b {
            return Err(Error::SamePoint(id_a, id_b));
        }
        let mut ancestors = HashSet::new();
        let mut up = Some(a);
        while let Some(i) = up {
            ancestors.insert(i);
            up = self.nodes[i].parent();
        }
        let mut up = Some(b);
        while let Some(i) = up {
            if ancestors.contains(&i) {
                return Ok(self.nodes[i].weight());
            }
            up = self.nodes[i].parent();
        }
        unreachable!("two leaves of one tree share the root")
    }

    /// Full structural audit: parent links, tight boxes, weights, cut sides
    /// and the id index. Returns a description of the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let live = self.nodes.len() - self.free.len();
        let Some(root) = self.root else {
            return if self.leaves.is_empty() && live == 0 {
                Ok(())
            } else {
                Err("empty tree with live nodes or ids".into())
            };
        };
        if self.nodes[root].parent().is_some() {
            return Err("root has a parent".into());
        }
        let mut visited = 0usize;
        let mut ids = 0usize;
        self.audit(root, &mut visited, &mut ids)?;
        if visited != live {
            return Err(format!("{visited} reachable nodes but {live} live slots"));
        }
        if ids != self.leaves.len() {
            return Err(format!("{ids} ids in leaves but {} indexed", self.leaves.len()));
        }
        for (&id, &leaf) in &self.leaves {
            match &self.nodes[leaf] {
                Node::Leaf(l) if l.ids.contains(id) => {}
                _ => return Err(format!("id {id} indexed to the wrong node")),
            }
        }
        let recount = self.recount_complexity();
        if recount != self.complexity {
            return Err(format!("tracked complexity {} but recount gives {recount}", self.complexity));
        }
        Ok(())
    }

    /// Returns (tight box, weight) of the subtree at `idx`.
    fn audit(&self, idx: usize, visited: &mut usize, ids: &mut usize) -> std::result::Result<(BoundingBox, u64), String> {
        *visited += 1;
        match &self.nodes[idx] {
            Node::Free => Err(format!("free slot {idx} reachable")),
            Node::Leaf(l) => {
                let (min, max) = self.bounds(idx);
                if min != max {
                    return Err(format!("leaf {idx} has a non-degenerate box"));
                }
                *ids += l.ids.len();
                Ok((BoundingBox::from_coords(min), l.ids.len() as u64))
            }
            Node::Branch(b) => {
                for child in [b.left(), b.right()] {
                    if self.nodes.get(child).map(Node::parent) != Some(Some(idx)) {
                        return Err(format!("child {child} of {idx} has a bad parent link"));
                    }
                }
                let (lbox, lw) = self.audit(b.left(), visited, ids)?;
                let (rbox, rw) = self.audit(b.right(), visited, ids)?;
                if lbox.max[b.cut_dim()] > b.cut_value {
                    return Err(format!("left subtree of {idx} crosses its cut"));
                }
                if rbox.min[b.cut_dim()] <= b.cut_value {
                    return Err(format!("right subtree of {idx} crosses its cut"));
                }
                let tight = lbox.union(&rbox);
                let (min, max) = self.bounds(idx);
                if tight.min != min || tight.max != max {
                    return Err(format!("box of {idx} is not tight"));
                }
                if lw + rw != b.weight {
                    return Err(format!("weight of {idx} is {} but children sum to {}", b.weight, lw + rw));
                }
                Ok((tight, b.weight))
            }
        }
    }

    /// Canonical nested record of the tree, independent of arena layout.
    pub fn to_record(&self) -> TreeRecord {
        TreeRecord {
            dimension: self.dim,
            leaf_count: self.len() as u64,
            root: self.root.map(|r| self.node_record(r)),
        }
    }

    fn node_record(&self, idx: usize) -> NodeRecord {
        match &self.nodes[idx] {
            Node::Branch(b) => NodeRecord::Branch {
                cut_dim: b.cut_dim(),
                cut_value: b.cut_value,
                min: self.bounds(idx).0.to_vec(),
                max: self.bounds(idx).1.to_vec(),
                weight: b.weight,
                left: Box::new(self.node_record(b.left())),
                right: Box::new(self.node_record(b.right())),
            },
            Node::Leaf(l) => {
                let mut ids = l.ids.to_vec();
                ids.sort_unstable();
                NodeRecord::Leaf { coords: self.bounds(idx).0.to_vec(), multiplicity: ids.len() as u64, ids }
            }
            Node::Free => unreachable!(),
        }
    }

    /// Byte-stable JSON form of [`to_record`](Self::to_record).
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("tree records always serialize")
    }
}

/// Serialized tree: node type, cuts, boxes, ids and multiplicities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRecord {
    pub dimension: usize,
    pub leaf_count: u64,
    pub root: Option<NodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum NodeRecord {
    Branch {
        cut_dim: usize,
        cut_value: f64,
        min: Vec<f64>,
        max: Vec<f64>,
        weight: u64,
        left: Box<NodeRecord>,
        right: Box<NodeRecord>,
    },
    Leaf {
        coords: Vec<f64>,
        ids: Vec<PointId>,
        multiplicity: u64,
    },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(coords: &[&[f64]]) -> Vec<Point> {
        coords.iter().map(|c| Point::new(c.to_vec())).collect()
    }

    fn stream(seed: u64) -> RngStream {
        RngStream::new(seed, 0)
    }

    #[test]
    fn single_point_tree() {
        let t = RandomCutTree::build(&pts(&[&[0.0, 0.0]]), stream(0)).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.model_complexity(), 0);
        assert_eq!(t.root_cut(), None);
        t.check_invariants().unwrap();
    }

    #[test]
    fn all_duplicates_collapse() {
        let t = RandomCutTree::build(&pts(&[&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]]), stream(0)).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.multiplicity(1).unwrap(), 3);
        assert_eq!(t.model_complexity(), 0);
        t.check_invariants().unwrap();
    }

    #[test]
    fn two_points_one_live_dimension() {
        for seed in 0..20 {
            let t = RandomCutTree::build(&pts(&[&[0.0, 0.0], &[10.0, 0.0]]), stream(seed)).unwrap();
            assert_eq!(t.root_cut().unwrap().0, 0);
            assert_eq!(t.depth(0).unwrap(), 1);
            assert_eq!(t.depth(1).unwrap(), 1);
            assert_eq!(t.model_complexity(), 2);
        }
    }

    #[test]
    fn build_errors() {
        assert_eq!(RandomCutTree::build(&[], stream(0)).unwrap_err(), Error::EmptyInput);
        assert!(matches!(
            RandomCutTree::build(&pts(&[&[0.0, 0.0], &[1.0]]), stream(0)),
            Err(Error::DimensionMismatch { .. })
        ));
        let dup = vec![Point::with_id(vec![0.0], 4), Point::with_id(vec![1.0], 4)];
        assert_eq!(RandomCutTree::build(&dup, stream(0)).unwrap_err(), Error::DuplicateId(4));
        assert_eq!(RandomCutTree::build(&pts(&[&[f64::NAN]]), stream(0)).unwrap_err(), Error::NonFinite);
    }

    #[test]
    fn insert_into_empty_and_duplicate() {
        let mut t = RandomCutTree::new(2, stream(1));
        t.insert(&[0.0, 0.0], 0).unwrap();
        assert_eq!(t.model_complexity(), 0);
        t.insert(&[1.0, 1.0], 1).unwrap();
        t.insert(&[3.0, -1.0], 2).unwrap();
        t.check_invariants().unwrap();
        let before = t.to_record();
        let c0 = t.model_complexity();
        let d = t.depth(1).unwrap() as u64;
        t.insert(&[1.0, 1.0], 7).unwrap();
        assert_eq!(t.model_complexity(), c0 + d);
        assert_eq!(t.multiplicity(7).unwrap(), 2);
        t.check_invariants().unwrap();
        t.delete(7).unwrap();
        assert_eq!(t.to_record(), before);
        assert_eq!(t.insert(&[5.0, 5.0], 0), Err(Error::DuplicateId(0)));
        assert!(matches!(t.insert(&[5.0], 9), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn delete_only_point_and_multiplicity() {
        let mut t = RandomCutTree::build(&pts(&[&[2.0]]), stream(0)).unwrap();
        t.delete(0).unwrap();
        assert!(t.is_empty());
        t.check_invariants().unwrap();
        assert_eq!(t.delete(0), Err(Error::UnknownPointId(0)));

        let mut t = RandomCutTree::build(&pts(&[&[1.0], &[1.0], &[1.0], &[4.0]]), stream(2)).unwrap();
        let shape = |t: &RandomCutTree| match t.to_record().root {
            Some(NodeRecord::Branch { cut_value, .. }) => cut_value,
            _ => panic!(),
        };
        let cut = shape(&t);
        t.delete(1).unwrap();
        assert_eq!(t.multiplicity(0).unwrap(), 2);
        assert_eq!(shape(&t), cut);
        t.check_invariants().unwrap();
    }

    #[test]
    fn insert_delete_round_trip() {
        let points = pts(&[&[0.0, 0.0], &[1.0, 0.5], &[0.2, 0.9], &[0.7, 0.1], &[0.4, 0.4]]);
        for seed in 0..50 {
            let mut t = RandomCutTree::build(&points, stream(seed)).unwrap();
            let before = t.to_json();
            t.insert(&[2.0, -1.0], 99).unwrap();
            t.check_invariants().unwrap();
            t.delete(99).unwrap();
            t.check_invariants().unwrap();
            assert_eq!(t.to_json(), before);
        }
    }

    #[test]
    fn balanced_four_leaf_complexity() {
        // Two tight pairs far apart usually split into a balanced tree.
        for seed in 0..200 {
            let t = RandomCutTree::build(&pts(&[&[0.0], &[1.0], &[10.0], &[11.0]]), stream(seed)).unwrap();
            let ds: Vec<usize> = (0..4).map(|i| t.depth(i).unwrap()).collect();
            if ds.iter().all(|&d| d == 2) {
                assert_eq!(t.model_complexity(), 8);
                return;
            }
        }
        panic!("no balanced tree in 200 seeds");
    }

    #[test]
    fn displacement_examples() {
        let empty = RandomCutTree::new(2, stream(0));
        assert_eq!(empty.displacement(&[3.0, 4.0]).unwrap(), 0);

        let one = RandomCutTree::build(&pts(&[&[0.0, 0.0]]), stream(0)).unwrap();
        assert_eq!(one.displacement(&[1.0, 1.0]).unwrap(), 2);
        assert_eq!(one.displacement(&[0.0, 0.0]).unwrap(), 0);

        let t = RandomCutTree::build(&pts(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[5.0, 5.0]]), stream(3)).unwrap();
        for id in 0..4 {
            let coords = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]][id as usize];
            assert_eq!(t.displacement(&coords).unwrap(), t.depth(id).unwrap() as u64);
        }
        assert!(matches!(t.displacement(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn displacement_matches_mutating_insert() {
        let points = pts(&[&[0.0, 0.0], &[1.0, 0.5], &[0.2, 0.9], &[0.7, 0.1], &[0.4, 0.4]]);
        let t = RandomCutTree::build(&points, stream(11)).unwrap();
        for probe in [[0.5, 0.5], [3.0, 3.0], [-1.0, 0.2], [0.2, 0.9]] {
            let want = t.displacement(&probe).unwrap();
            let mut copy = t.clone();
            let mut rng = t.query_stream(&probe).rng();
            copy.insert_with_rng(&probe, 100, &mut rng).unwrap();
            assert_eq!(copy.model_complexity() - t.model_complexity(), want);
        }
    }

    #[test]
    fn removal_displacement_matches_delete() {
        let points = pts(&[&[0.0, 0.0], &[1.0, 0.5], &[0.2, 0.9], &[0.7, 0.1], &[0.7, 0.1], &[0.4, 0.4]]);
        let t = RandomCutTree::build(&points, stream(5)).unwrap();
        let all: HashMap<_, _> = t.member_displacements().into_iter().collect();
        let counts: HashMap<_, _> = t.member_displaced_leaves().into_iter().collect();
        assert_eq!(all.len(), 6);
        for id in 0..6 {
            let mut copy = t.clone();
            copy.delete(id).unwrap();
            let drop = t.model_complexity() - copy.model_complexity();
            assert_eq!(t.removal_displacement(id).unwrap(), drop);
            assert_eq!(all[&id], drop);
            let moved = (0..6).filter(|&o| o != id && copy.depth(o).unwrap() < t.depth(o).unwrap()).count() as u64;
            assert_eq!(t.removal_displaced_leaves(id).unwrap(), moved);
            assert_eq!(counts[&id], moved);
        }
    }

    #[test]
    fn displaced_leaves_on_insertion() {
        let points = pts(&[&[0.0, 0.0], &[1.0, 0.5], &[0.2, 0.9], &[0.7, 0.1]]);
        let t = RandomCutTree::build(&points, stream(2)).unwrap();
        for probe in [[0.5, 0.5], [3.0, 3.0], [0.2, 0.9]] {
            let mut copy = t.clone();
            let mut rng = t.query_stream(&probe).rng();
            copy.insert_with_rng(&probe, 100, &mut rng).unwrap();
            let moved = (0..4).filter(|&o| copy.depth(o).unwrap() > t.depth(o).unwrap()).count() as u64;
            assert_eq!(t.displaced_leaves(&probe).unwrap(), moved);
        }
        assert_eq!(RandomCutTree::new(2, stream(0)).displaced_leaves(&[1.0, 1.0]).unwrap(), 0);
    }

    #[test]
    fn tree_distance_examples() {
        let t = RandomCutTree::build(&pts(&[&[0.0, 0.0], &[1.0, 1.0]]), stream(0)).unwrap();
        assert_eq!(t.tree_distance(0, 1).unwrap(), 2);

        let points = pts(&[&[0.0], &[1.0], &[2.0], &[3.0], &[4.0], &[5.0]]);
        let t = RandomCutTree::build(&points, stream(8)).unwrap();
        let (dim, cut) = t.root_cut().unwrap();
        assert_eq!(dim, 0);
        let left: Vec<u64> = (0..6).filter(|&i| (i as f64) <= cut).collect();
        let right: Vec<u64> = (0..6).filter(|&i| (i as f64) > cut).collect();
        assert_eq!(t.tree_distance(left[0], right[0]).unwrap(), 6);
        // Siblings: any branch with two leaf children.
        fn sibling_leaves(n: &NodeRecord) -> Option<(u64, u64)> {
            match n {
                NodeRecord::Branch { left, right, .. } => match (&**left, &**right) {
                    (NodeRecord::Leaf { ids: a, .. }, NodeRecord::Leaf { ids: b, .. }) => Some((a[0], b[0])),
                    _ => sibling_leaves(left).or_else(|| sibling_leaves(right)),
                },
                _ => None,
            }
        }
        let (a, b) = sibling_leaves(t.to_record().root.as_ref().unwrap()).unwrap();
        assert_eq!(t.tree_distance(a, b).unwrap(), 2);

        let t = RandomCutTree::build(&pts(&[&[0.0], &[0.0], &[1.0]]), stream(0)).unwrap();
        assert_eq!(t.tree_distance(0, 1), Err(Error::SamePoint(0, 1)));
        assert_eq!(t.tree_distance(0, 9), Err(Error::UnknownPointId(9)));
    }

    #[test]
    fn build_is_order_independent() {
        let a = vec![
            Point::with_id(vec![0.0, 0.3], 0),
            Point::with_id(vec![0.5, 0.1], 1),
            Point::with_id(vec![0.9, 0.8], 2),
            Point::with_id(vec![0.5, 0.1], 3),
        ];
        let mut b = a.clone();
        b.reverse();
        let ta = RandomCutTree::build(&a, stream(4)).unwrap();
        let tb = RandomCutTree::build(&b, stream(4)).unwrap();
        assert_eq!(ta.to_json(), tb.to_json());
    }
}
