use thiserror::Error;

/// Errors raised by the divergence, spectral and flow routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid bandwidth: {0}")]
    InvalidBandwidth(f64),

    #[error("degenerate bandwidth: all point pairs coincide")]
    DegenerateBandwidth,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),

    #[error("matrix not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix not PSD (min eigenvalue {min:e}, max eigenvalue {max:e})")]
    NotPsd { min: f64, max: f64 },

    #[error("rank-deficient factor: {0}")]
    RankDeficient(String),

    #[error("support leakage: projected mass {projected} vs expected {expected}")]
    SupportLeakage { projected: f64, expected: f64 },

    #[error("feature dimension {0} exceeds the limit of {1}")]
    FeatureDimensionOverflow(usize, usize),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unequal sizes: {0} vs {1}")]
    UnequalSizes(usize, usize),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
