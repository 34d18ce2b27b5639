//! Error type shared across the crate.

use crate::dataset::PointId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dataset too small: need at least {min} points, have {have}")]
    DatasetTooSmall { min: usize, have: usize },

    #[error(
        "hessian dimension {m} exceeds the dense-matrix budget of {max} rows"
    )]
    HessianTooLarge { m: usize, max: usize },

    #[error(
        "hessian is not positive definite even with jitter {jitter:.1e} \
         (smallest eigenvalue is approximately {min_eigenvalue:.3e})"
    )]
    IndefiniteHessian { jitter: f64, min_eigenvalue: f64 },

    #[error(
        "optimizer failed to converge: gradient norm {grad_norm:.3e} after \
         {iterations} Newton iterations (tolerance {tolerance:.1e})"
    )]
    NoConvergence {
        grad_norm: f64,
        iterations: usize,
        tolerance: f64,
    },

    #[error("training failed for leave-one-out candidate {id}: {source}")]
    LooCandidate {
        id: PointId,
        #[source]
        source: Box<Error>,
    },

    #[error("sub-training failed for removal set {subset:?}: {source}")]
    SubsetTraining {
        subset: Vec<PointId>,
        #[source]
        source: Box<Error>,
    },

    #[error("point id {0} not found in dataset")]
    UnknownPointId(PointId),

    #[error("bad IDX magic {magic:02x?} in {path}: {reason}")]
    IdxMagic {
        path: String,
        magic: [u8; 4],
        reason: String,
    },

    #[error(
        "truncated IDX payload in {path}: header promises {expected} bytes, \
         file holds {got}"
    )]
    IdxTruncated {
        path: String,
        expected: usize,
        got: usize,
    },

    #[error(
        "class {class} has only {available} examples, {requested} requested"
    )]
    InsufficientClass {
        class: usize,
        available: usize,
        requested: usize,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
