use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the command-line runner to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Quadrature or iteration failed to reach its tolerance.
    Numerical,
    /// Bad arguments, shapes or files.
    Input,
    /// A library invariant was violated.
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {0}: must be at least 1")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("threshold {tau} outside [0, {dim}]")]
    ThresholdOutOfRange { tau: usize, dim: usize },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("covariance is singular: eigenvalue {eigenvalue:e} below floor {floor:e}")]
    Singular { eigenvalue: f64, floor: f64 },

    #[error("spectrum must be sorted in descending order")]
    UnsortedSpectrum,

    #[error("basis orthogonality error {error:e} exceeds tolerance {tolerance:e}")]
    NotOrthogonal { error: f64, tolerance: f64 },

    #[error("vector has zero norm")]
    ZeroVector,

    #[error("rule has a nonzero linear term; only equal-mean (overlapping) rules are supported here")]
    LinearTermUnsupported,

    #[error("hidden width {width} is smaller than the rank {rank} of the quadratic form")]
    InsufficientWidth { width: usize, rank: usize },

    #[error("quadrature did not converge: achieved error bound {bound:e}")]
    Quadrature { bound: f64 },

    #[error("iteration did not converge after {iterations} steps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("network has a bias term; this diagnostic needs the homogeneous (bias-free) network")]
    BiasNotSupported,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Quadrature { .. } | Error::NonConvergence { .. } => ErrorClass::Numerical,
            Error::Invariant(_) => ErrorClass::Internal,
            _ => ErrorClass::Input,
        }
    }
}
