//! Ensemble of random cut trees with mean-displacement scoring.

use std::collections::{HashMap, HashSet};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{check_dim, Point};
use crate::rng::{RngStream, StreamRng};
use crate::rrct::{RandomCutTree, TreeRecord};
use crate::PointId;

/// Per-tree stream key for subsample / reservoir decisions.
const SAMPLER_STREAM: u64 = 0x73_616d_706c;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub num_trees: usize,
    /// Unset: every tree holds every point.
    pub subsample_size: Option<usize>,
    pub execution: Execution,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { num_trees: 50, subsample_size: None, execution: Execution::default() }
    }
}

impl ForestConfig {
    pub fn with_trees(num_trees: usize) -> Self {
        Self { num_trees, ..Self::default() }
    }
}

/// A point's aggregate score and its position in the descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPoint {
    pub point_id: PointId,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone)]
struct TreeSlot {
    tree: RandomCutTree,
    sampler: StreamRng,
    /// Reservoir contents; only maintained when subsampling.
    members: Vec<PointId>,
}

#[derive(Debug, Clone)]
pub struct Forest {
    slots: Vec<TreeSlot>,
    config: ForestConfig,
    base: RngStream,
    dim: usize,
    seen: u64,
    ids: HashSet<PointId>,
}

fn point_ids(points: &[Point], offset: u64) -> Vec<PointId> {
    points.iter().enumerate().map(|(i, p)| p.id.unwrap_or(offset + i as u64)).collect()
}

impl Forest {
    /// Trains `config.num_trees` trees, tree `i` on stream `stream.substream(i)`.
    /// Points without an id are keyed by slice index.
    pub fn train(points: &[Point], config: ForestConfig, stream: RngStream) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyInput)?;
        if config.num_trees == 0 {
            return Err(Error::InvalidConfig { field: "num_trees", reason: "must be positive".into() });
        }
        if config.subsample_size == Some(0) {
            return Err(Error::InvalidConfig { field: "subsample_size", reason: "must be positive".into() });
        }
        let dim = first.dim();
        for p in points {
            check_dim(dim, p.dim())?;
            p.validate()?;
        }
        let ids = point_ids(points, 0);
        let mut unique = HashSet::with_capacity(ids.len());
        for &id in &ids {
            if !unique.insert(id) {
                return Err(Error::DuplicateId(id));
            }
        }
        let tagged: Vec<Point> =
            points.iter().zip(&ids).map(|(p, &id)| Point::with_id(p.coords.clone(), id)).collect();
        let n = tagged.len();

        let slots = config.execution.map_range(config.num_trees, |i| {
            let tree_stream = stream.substream(i as u64);
            let mut sampler = tree_stream.substream(SAMPLER_STREAM).rng();
            match config.subsample_size {
                Some(s) if s < n => {
                    let mut chosen = index::sample(&mut sampler, n, s).into_vec();
                    chosen.sort_unstable();
                    let subset: Vec<Point> = chosen.iter().map(|&j| tagged[j].clone()).collect();
                    let tree = RandomCutTree::build(&subset, tree_stream).expect("validated input");
                    TreeSlot { tree, sampler, members: subset.iter().filter_map(|p| p.id).collect() }
                }
                _ => {
                    let tree = RandomCutTree::build(&tagged, tree_stream).expect("validated input");
                    let members = if config.subsample_size.is_some() { ids.clone() } else { Vec::new() };
                    TreeSlot { tree, sampler, members }
                }
            }
        });

        Ok(Self { slots, config, base: stream, dim, seen: n as u64, ids: unique })
    }

    /// Fresh forest over `points` with this forest's configuration.
    pub fn retrain(&self, points: &[Point], stream: RngStream) -> Result<Self> {
        Self::train(points, self.config, stream)
    }

    /// Stream the forest was trained from.
    pub fn stream(&self) -> RngStream {
        self.base
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn set_execution(&mut self, execution: Execution) {
        self.config.execution = execution;
    }

    pub fn num_trees(&self) -> usize {
        self.slots.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trees(&self) -> impl Iterator<Item = &RandomCutTree> {
        self.slots.iter().map(|s| &s.tree)
    }

    pub fn tree(&self, i: usize) -> &RandomCutTree {
        &self.slots[i].tree
    }

    /// Number of points offered to the forest so far.
    pub fn points_seen(&self) -> u64 {
        self.seen
    }

    pub fn mean_complexity(&self) -> f64 {
        self.slots.iter().map(|s| s.tree.model_complexity() as f64).sum::<f64>() / self.slots.len() as f64
    }

    /// Mean insertion displacement of each candidate. Sorted by descending
    /// score, ties by ascending id; candidates without an id use their index.
    pub fn score(&self, candidates: &[Point]) -> Result<Vec<ScoredPoint>> {
        for c in candidates {
            check_dim(self.dim, c.dim())?;
            c.validate()?;
        }
        let per_tree = self.config.execution.map_slice(&self.slots, |slot| {
            candidates
                .iter()
                .map(|c| slot.tree.displacement(&c.coords).expect("validated candidate"))
                .collect::<Vec<u64>>()
        });
        Ok(self.aggregate(per_tree, &point_ids(candidates, 0)))
    }

    /// Scores points in the dataset the forest was trained on by the number
    /// of leaves each one displaces: for a point a tree holds, the leaves
    /// that move up when it is removed; for one a subsampled tree lacks, the
    /// leaves its simulated insertion pushes down.
    pub fn score_members(&self, points: &[Point]) -> Result<Vec<ScoredPoint>> {
        for p in points {
            check_dim(self.dim, p.dim())?;
        }
        let ids = point_ids(points, 0);
        // Dataset ids are dense, so the position lookup is usually the identity.
        let dense = ids.iter().enumerate().all(|(i, &id)| id == i as PointId);
        let position: HashMap<PointId, usize> =
            if dense { HashMap::new() } else { ids.iter().enumerate().map(|(i, &id)| (id, i)).collect() };
        let per_tree = self.config.execution.map_slice(&self.slots, |slot| {
            let mut held: Vec<Option<u64>> = vec![None; points.len()];
            for (id, d) in slot.tree.member_displaced_leaves() {
                let at = if dense { Some(id as usize).filter(|&i| i < held.len()) } else { position.get(&id).copied() };
                if let Some(i) = at {
                    held[i] = Some(d);
                }
            }
            points
                .iter()
                .zip(held)
                .map(|(p, d)| d.unwrap_or_else(|| slot.tree.displaced_leaves(&p.coords).expect("validated point")))
                .collect::<Vec<u64>>()
        });
        Ok(self.aggregate(per_tree, &ids))
    }

    fn aggregate(&self, per_tree: Vec<Vec<u64>>, ids: &[PointId]) -> Vec<ScoredPoint> {
        let mut totals = vec![0u64; ids.len()];
        for scores in &per_tree {
            for (t, s) in totals.iter_mut().zip(scores) {
                *t += s;
            }
        }
        let trees = self.slots.len() as f64;
        let scored = ids
            .iter()
            .zip(totals)
            .map(|(&point_id, total)| ScoredPoint { point_id, score: total as f64 / trees, rank: 0 })
            .collect();
        rank(scored)
    }

    /// Streams new points into every tree. Subsampled trees keep a uniform
    /// reservoir: once full, the `t`-th point replaces a random member with
    /// probability `subsample_size / t`.
    pub fn update(&mut self, new_points: &[Point]) -> Result<()> {
        if new_points.is_empty() {
            return Ok(());
        }
        let ids = point_ids(new_points, self.seen);
        let mut batch = HashSet::new();
        for (p, &id) in new_points.iter().zip(&ids) {
            check_dim(self.dim, p.dim())?;
            p.validate()?;
            if self.ids.contains(&id) || !batch.insert(id) {
                return Err(Error::DuplicateId(id));
            }
        }
        let seen = self.seen;
        let subsample = self.config.subsample_size;
        self.config.execution.for_each_mut(&mut self.slots, |_, slot| {
            for (j, (p, &id)) in new_points.iter().zip(&ids).enumerate() {
                match subsample {
                    None => slot.tree.insert(&p.coords, id).expect("validated point"),
                    Some(s) if slot.members.len() < s => {
                        slot.tree.insert(&p.coords, id).expect("validated point");
                        slot.members.push(id);
                    }
                    Some(s) => {
                        let t = seen + j as u64;
                        let k = slot.sampler.random_range(0..=t);
                        if (k as usize) < s {
                            let evicted = std::mem::replace(&mut slot.members[k as usize], id);
                            slot.tree.delete(evicted).expect("reservoir member is stored");
                            slot.tree.insert(&p.coords, id).expect("validated point");
                        }
                    }
                }
            }
        });
        self.seen += new_points.len() as u64;
        self.ids.extend(ids);
        Ok(())
    }

    pub fn to_record(&self) -> ForestRecord {
        ForestRecord {
            num_trees: self.slots.len(),
            dimension: self.dim,
            seed: self.base.seed,
            stream_id: self.base.stream_id,
            trees: self.slots.iter().map(|s| s.tree.to_record()).collect(),
        }
    }

    /// Header plus the canonical form of every tree.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("forest records always serialize")
    }
}

/// Sorts descending by score (ties by ascending id) and assigns ranks.
pub fn rank(mut scored: Vec<ScoredPoint>) -> Vec<ScoredPoint> {
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.point_id.cmp(&b.point_id)));
    for (i, s) in scored.iter_mut().enumerate() {
        s.rank = i;
    }
    scored
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestRecord {
    pub num_trees: usize,
    pub dimension: usize,
    pub seed: u64,
    pub stream_id: u64,
    pub trees: Vec<TreeRecord>,
}
