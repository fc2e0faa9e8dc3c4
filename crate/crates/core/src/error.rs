use thiserror::Error;

pub type Result<T, E = ScoreError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("projection onto level set failed: {0}")]
    ProjectionFailed(String),

    #[error("level set is not compact: ray search exceeded 2^60 along a direction")]
    NonCompactLevelSet,

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("heavy tail detected: fitted shape {0} >= 0")]
    HeavyTail(f64),

    #[error("bootstrap failed: {0}")]
    Bootstrap(String),

    #[error("seed level rejected: {0}")]
    Seed(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("time budget exhausted")]
    Timeout,

    #[error("parse error: {0}")]
    Parse(String),
}

impl ScoreError {
    pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(ScoreError::DimensionMismatch { expected, got })
        }
    }
}
