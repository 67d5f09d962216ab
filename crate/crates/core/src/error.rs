use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed dump header: {0}")]
    MalformedHeader(String),
    #[error("shape mismatch: expected {expected} values, found {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("non-finite value at flat index {index}")]
    NonFiniteValue { index: usize },
    #[error("tensor must have at least one row and one column (got {rows}x{cols})")]
    EmptyTensor { rows: usize, cols: usize },
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("bit width {0} outside [2, 16]")]
    InvalidBits(u32),
    #[error("percentile {0} outside (0, 100]")]
    InvalidPercentile(f64),
    #[error("percentile threshold is zero; scale would be degenerate")]
    DegenerateScale,
    #[error("group count {k} invalid for {channels} channels")]
    InvalidK { k: usize, channels: usize },
    #[error("policy has {actual} directives but the stack has {expected} layers")]
    PolicyLengthMismatch { expected: usize, actual: usize },
    #[error("need at least {required} rows, got {actual}")]
    InsufficientRows { required: usize, actual: usize },
    #[error("need at least {required} values, got {actual}")]
    TooFewValues { required: usize, actual: usize },
    #[error("variance is zero")]
    ZeroVariance,
    #[error("fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("duplicate layer label {0:?}")]
    DuplicateLabel(String),
    #[error("probe normal equations are not positive definite")]
    SingularProbe,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
