use thiserror::Error;

/// Errors surfaced by the diffusion and ranking pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("zero-variance prediction vector: all entries are (numerically) equal")]
    ZeroVariance,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("scale parameter must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("prediction vector must have at least two entries, got {0}")]
    TooShort(usize),
    #[error("non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("duplicate coupling index: {side} index {index} appears twice")]
    DuplicateIndex { side: &'static str, index: usize },
    #[error("coupling index out of range: {side} index {index} >= {bound}")]
    IndexOutOfRange {
        side: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("dense bridge solve is capped at {limit} instances per side, got {got}")]
    SizeLimitExceeded { limit: usize, got: usize },
    #[error("singular linear system in bridge solve")]
    SingularSystem,
    #[error("degenerate covariance: data has no variance")]
    DegenerateData,
    #[error("empty rank-pair set")]
    EmptyPairs,
    #[error("no validation pairs supplied but validation-driven termination was requested")]
    NoValidationPairs,
    #[error("at least one reference required")]
    NoReferences,
}

pub type Result<T> = std::result::Result<T, Error>;
