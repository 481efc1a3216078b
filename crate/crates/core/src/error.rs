use thiserror::Error;

/// Faults raised by malformed input. Negative analysis outcomes
/// (infeasible LMI, missing factorization, ...) are returned as values.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("mode cutoff n0 = {n0} exceeds truncation order {n_modes}")]
    CutoffExceedsTruncation { n0: usize, n_modes: usize },

    #[error("segment {index}: {source}")]
    Segment {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
