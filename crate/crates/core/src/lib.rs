//! Design-space exploration with a robust random cut forest.
//!
//! Explored points are summarized in an ensemble of random cut trees. Points
//! whose removal would shrink the trees the most (largest displacement) form
//! the current frontier, and new samples are drawn from small L2 balls around
//! them. See [`explorer::Explorer`] for the loop itself.

pub mod error;
pub mod exec;
pub mod explorer;
pub mod forest;
pub mod geometry;
pub mod metrics;
pub mod rng;
pub mod rrct;

/// Identifier assigned to a point when it is admitted to a dataset.
pub type PointId = u64;

pub use error::{Error, Result};
pub use exec::Execution;
pub use explorer::{Dataset, Explorer, ExplorerConfig, IterationRecord, StoppingRule, UpdateMode};
pub use forest::{Forest, ForestConfig, ScoredPoint};
pub use geometry::{BoundingBox, ClipMode, DomainBounds, Norm, Point};
pub use rng::RngStream;
pub use rrct::RandomCutTree;
