use thiserror::Error;

/// Errors raised while building bases or integrating the process.
#[derive(Debug, Error)]
pub enum FsiError {
    #[error("grid {nx}x{nz} rejected: both cell counts must be at least 4")]
    GridTooCoarse { nx: usize, nz: usize },

    #[error("size mismatch in {what}: expected {expected}, got {got}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("requested {requested} {kind} modes but only {available} are available")]
    TooManyModes {
        kind: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("{kind} eigensolve did not converge (max residual {residual:.3e})")]
    EigenNonConvergence { kind: &'static str, residual: f64 },

    #[error("saddle-point solve is singular: {0}")]
    SingularSaddlePoint(String),

    #[error("mass matrix is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    MassNotSpd { min_eigenvalue: f64 },

    #[error("midpoint iteration failed at t = {t} after {halvings} step halvings (residual {residual:.3e})")]
    StepNonConvergence { t: f64, halvings: u32, residual: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty state set")]
    EmptySet,

    #[error("window [{start}, {end}] is not covered by both runs")]
    WindowNotCovered { start: f64, end: f64 },

    #[error("cache: {0}")]
    Cache(String),

    #[error("stale cache: field `{field}` is {cached} in the cache but {requested} was requested")]
    StaleCache {
        field: &'static str,
        cached: u64,
        requested: u64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FsiError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> FsiError {
    FsiError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
