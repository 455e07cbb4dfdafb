//! Crate-wide error type.

use crate::density::Label;
use thiserror::Error;

/// Errors produced by the tracking library.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix had a different dimension than required.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A matrix that must be symmetric positive-definite failed its
    /// factorization. `context` names the offending quantity.
    #[error("{context} is not positive-definite")]
    NotPositiveDefinite { context: &'static str },

    /// A scalar parameter was outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A mixture had no positively weighted component.
    #[error("mixture must contain at least one positively weighted component")]
    EmptyMixture,

    /// Two tracks with the same label were inserted into one density.
    #[error("duplicate track label {0}")]
    DuplicateLabel(Label),

    /// Densities that must share a label set (fusion inputs) did not.
    #[error("track label sets differ between densities to be fused")]
    LabelSetMismatch,

    /// The association likelihood matrix was structurally invalid.
    #[error("degenerate likelihood matrix: {0}")]
    DegenerateLikelihood(String),

    /// Belief propagation produced a non-finite message.
    #[error("belief propagation produced non-finite messages")]
    DegenerateMessages,

    /// Exact enumeration was asked for an instance with too many events.
    #[error(
        "exact enumeration rejected: {n} tracks x {m} measurements implies \
         {count:.4e} association events (limit {limit})"
    )]
    InstanceTooLarge {
        n: usize,
        m: usize,
        /// Event count from the closed form Σ_k k!·C(n,k)·C(m,k).
        count: f64,
        limit: u64,
    },

    /// Every enumerated association event had zero probability, so no
    /// posterior is defined.
    #[error("all association events have zero probability")]
    ZeroEventWeight,

    /// A scenario configuration could not be parsed or was inconsistent.
    #[error("scenario error: {0}")]
    Scenario(String),

    /// An I/O failure while reading or writing scenario/result files.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
