//! Error types shared across the library.

use thiserror::Error;

/// Library-wide error type.
///
/// Variants are grouped by how a batch caller should react: spec/universe
/// mismatches and bad inputs are data errors, while failed decompositions,
/// unsolvable root finds, and degenerate comparisons are numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    /// Feature names or lengths of two comparands/specs disagree.
    #[error("spec mismatch: {0}")]
    SpecMismatch(String),

    /// An input value violates a precondition (non-finite, out of range, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A weight vector violates the w >= 1 contract.
    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    /// A similarity ratio has an all-zero denominator.
    #[error("degenerate comparison: {0}")]
    DegenerateComparison(String),

    /// Matrix dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An iterative or direct numerical procedure failed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Input data could not be read, parsed, or verified.
    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by malformed or mismatched input data
    /// (as opposed to numerical failures).
    pub fn is_data_error(&self) -> bool {
        !matches!(
            self,
            Error::Numerical(_) | Error::DegenerateComparison(_)
        )
    }
}
