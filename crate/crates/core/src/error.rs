use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mode {alpha:?}: assembled matrix asymmetric by {asymmetry:e} (norm {norm:e})")]
    AsymmetricMode {
        alpha: Vec<i64>,
        asymmetry: f64,
        norm: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("ellipticity violated at mode {alpha:?}: minimum eigenvalue {lambda_min:e}")]
    EllipticityViolation { alpha: Vec<i64>, lambda_min: f64 },

    #[error("Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal {off_diagonal:e})")]
    NoConvergence { sweeps: usize, off_diagonal: f64 },

    #[error("negative eigenvalue {0:e} has no real square root")]
    NegativeEigenvalue(f64),

    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),

    #[error("time must be positive, got {0}")]
    NonpositiveTime(f64),

    #[error("grid of {grid} points per axis aliases truncation radius {radius} (need >= {})", 2 * radius + 1)]
    AliasRisk { grid: usize, radius: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("full enumeration of 2^{bits} paths exceeds the limit of 2^{limit}")]
    EnumerationTooLarge { bits: usize, limit: usize },

    #[error("walk did not exit the domain within {steps} steps")]
    ExitTimeout { steps: u64 },

    #[error("domain has no boundary")]
    NoBoundary,

    #[error("time step {dt:e} exceeds explicit stability bound {bound:e}")]
    StabilityViolation { dt: f64, bound: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
