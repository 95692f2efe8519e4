use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("need at least 2 points, got {0}")]
    EmptyInput(usize),

    #[error("points {first} and {second} coincide")]
    DuplicatePoint { first: usize, second: usize },

    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid projection dimension k={k} for d={d}")]
    BadDimension { k: usize, d: usize },

    #[error("point lies outside the unit cube")]
    PointOutOfRange,

    #[error("points are closer than the finest quad tree level can separate")]
    AspectRatioTooLarge,

    #[error("unknown point id {0}")]
    UnknownPoint(usize),

    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("move of point {0} leaves the bounding region")]
    OutOfRegion(usize),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("matrix is singular (graph disconnected?)")]
    SingularMatrix,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
