use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::forest::ForestConfig;
use crate::geometry::{BoundingBox, DomainBounds};

/// How the forest absorbs each iteration's new points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Insert into the existing trees.
    #[default]
    Streaming,
    /// Rebuild every tree over the whole dataset.
    Retrain,
}

/// Hyper-parameters of the exploration loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorerConfig {
    /// Radius of the sampling ball around each peripheral point.
    pub epsilon: f64,
    /// Peripheral points (and so new samples) per iteration.
    pub batch_size: usize,
    pub warmup_size: usize,
    pub num_trees: usize,
    pub subsample_size: Option<usize>,
    pub max_iterations: usize,
    pub bounds: DomainBounds,
    /// Where warm-up points are drawn; the whole domain when unset.
    pub warmup_region: Option<BoundingBox>,
    /// Minimum L2 spacing between any two admitted points.
    pub collision_tolerance: f64,
    pub seed: u64,
    pub update_mode: UpdateMode,
    pub execution: Execution,
}

impl ExplorerConfig {
    /// Defaults for a unit cube of dimension `dim`.
    pub fn unit_cube(dim: usize) -> Self {
        Self {
            epsilon: 0.05,
            batch_size: 10,
            warmup_size: 20,
            num_trees: 50,
            subsample_size: None,
            max_iterations: 10,
            bounds: DomainBounds::unit_cube(dim, Default::default()),
            warmup_region: None,
            collision_tolerance: 1e-6,
            seed: 0,
            update_mode: UpdateMode::Streaming,
            execution: Execution::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn forest_config(&self) -> ForestConfig {
        ForestConfig { num_trees: self.num_trees, subsample_size: self.subsample_size, execution: self.execution }
    }

    pub fn warmup_box(&self) -> &BoundingBox {
        self.warmup_region.as_ref().unwrap_or(&self.bounds.bbox)
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(field: &'static str, reason: impl Into<String>) -> Result<()> {
            Err(Error::InvalidConfig { field, reason: reason.into() })
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return bad("epsilon", format!("must be a positive finite number, got {}", self.epsilon));
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if self.warmup_size < 2 {
            return bad("warmup_size", "must be at least 2");
        }
        if self.batch_size > self.warmup_size {
            return bad("batch_size", format!("must not exceed warmup_size ({})", self.warmup_size));
        }
        if self.num_trees == 0 {
            return bad("num_trees", "must be at least 1");
        }
        if self.subsample_size == Some(0) {
            return bad("subsample_size", "must be at least 1 when set");
        }
        if !(self.collision_tolerance >= 0.0) {
            return bad("collision_tolerance", "must be non-negative");
        }
        if self.collision_tolerance >= self.epsilon {
            return bad("collision_tolerance", format!("must be smaller than epsilon ({})", self.epsilon));
        }
        let b = &self.bounds.bbox;
        if b.min.len() != b.max.len() || b.min.is_empty() {
            return bad("bounds", "min and max must have the same non-zero length");
        }
        if b.min.iter().zip(&b.max).any(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return bad("bounds", "every dimension needs finite min < max");
        }
        if let Some(w) = &self.warmup_region {
            if w.dim() != b.dim() || w.max.len() != w.min.len() {
                return bad("warmup_region", "dimension differs from bounds");
            }
            let inside = w.min.iter().zip(&w.max).zip(b.min.iter().zip(&b.max))
                .all(|((wl, wh), (bl, bh))| bl <= wl && wl <= wh && wh <= bh);
            if !inside {
                return bad("warmup_region", "must be a valid box inside bounds");
            }
        }
        Ok(())
    }
}

/// Extra stopping conditions beyond `max_iterations`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StoppingRule {
    /// Stop once the dataset holds at least this many points.
    pub max_points: Option<usize>,
    pub wall_clock: Option<Duration>,
}
