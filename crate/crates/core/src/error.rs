use thiserror::Error;

use crate::PointId;

/// Errors raised by geometry, tree, forest and explorer operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("point has a non-finite coordinate")]
    NonFinite,
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("unknown point id {0}")]
    UnknownPointId(PointId),
    #[error("duplicate point id {0}")]
    DuplicateId(PointId),
    #[error("ids {0} and {1} resolve to the same leaf")]
    SamePoint(PointId, PointId),
    #[error("requested {k} peripheral points from a dataset of {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("could not place a point after {retries} retries")]
    CollisionExhausted { retries: usize },
    #[error("invalid configuration: `{field}` {reason}")]
    InvalidConfig { field: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
