use thiserror::Error;

/// Error type shared across the crate.
///
/// Numeric failures map to exit code 3 at the CLI boundary; configuration
/// failures map to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(f64),
    #[error("exponential argument {0} exceeds the overflow guard (700)")]
    OverflowGuard(f64),
    #[error("invalid domain half-width {0}; must be > 0")]
    InvalidDomain(f64),
    #[error("invalid parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("batch size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("covariance factorization failed: matrix is not positive-definite")]
    FactorizationFailure,
    #[error("no sign change found after {0} doublings; the empirical root may not exist for this batch")]
    BracketNotFound(u32),
    #[error("gradient denominator {0} is not positive on this batch")]
    DegenerateDenominator(f64),
    #[error("iteration limit {0} reached without convergence")]
    NonConvergence(usize),
    #[error("initial point lies outside the feasible box")]
    InvalidStart,
    #[error("need at least {need} sample sizes for a rate fit, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps an error with run context (e.g. which rep/iteration failed).
    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// CLI exit code: 2 for configuration problems, 3 for numeric ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Io(_) => 2,
            Error::Context { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
