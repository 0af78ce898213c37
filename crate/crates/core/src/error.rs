//! Error type shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("vector entries must be finite")]
    NonFiniteEntries,

    #[error("dimension must be at least 1")]
    EmptyVector,

    #[error("index set must be strictly increasing and within bounds (n = {n})")]
    InvalidIndexSet { n: usize },

    #[error("subset must not be empty")]
    EmptySubset,

    #[error("subset must contain at least {needed} elements, got {got}")]
    SubsetTooSmall { needed: usize, got: usize },

    #[error("corruption count k = {k} exceeds sample count n = {n}")]
    CorruptionExceedsSamples { k: usize, n: usize },

    #[error("k must satisfy 0 <= k < n (k = {k}, n = {n})")]
    InvalidRegime { k: usize, n: usize },

    #[error("corruption regime outside the error bound's applicability (denominator {denominator} <= 0)")]
    RegimeOutsideApplicability { denominator: f64 },

    #[error("probe sequence must not be empty")]
    EmptyProbe,

    #[error("probe sequence must have strictly increasing n")]
    ProbeNotIncreasing,

    #[error("step size too large: non-finite loss at iteration {iteration}")]
    StepSizeTooLarge { iteration: usize },

    #[error("reference signal must be nonzero")]
    ZeroReferenceSignal,

    #[error("brute-force guard exceeded: {combinations} subsets > 10^6")]
    BruteForceGuardExceeded { combinations: f64 },

    #[error("unsupported moment orders (p, q) = ({p}, {q}): need p + q = 4, p in {{2, 3, 4}}")]
    InvalidMomentOrders { p: u32, q: u32 },

    #[error("no records to summarize")]
    EmptyRecords,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dataset parse error at line {line}: {message}")]
    DatasetParse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
