use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("weights must sum to 1 (got {0})")]
    WeightsNotNormalized(f64),

    #[error("mutual information must be nonnegative (got {0})")]
    NegativeInformation(f64),

    #[error("round {round} outside 1..={rounds}")]
    RoundOutOfRange { round: usize, rounds: usize },

    #[error("inconsistent participation: {0}")]
    Participation(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),
}
