use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("column {column} of the transition matrix sums to {sum}, expected 1 (column-stochastic)")]
    NonStochastic { column: usize, sum: f64 },

    #[error("transition matrix entry ({row}, {column}) = {value} is outside [0, 1]")]
    NegativeEntry { row: usize, column: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}{}", context_suffix(.context))]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("AR parameter {0} must satisfy |phi| < 1")]
    InvalidArParameter(f64),

    #[error("control {control:?} exceeds the sample budget or a per-sensor maximum")]
    BudgetExceeded { control: Vec<u32> },

    #[error("all-zero control allocations are excluded from the control set")]
    EmptyControl,

    #[error("Cholesky factorization failed for covariance of (state {state}, control {control}); model construction bug")]
    CholeskyFailure { state: usize, control: usize },

    #[error("innovation covariance is numerically singular")]
    SingularInnovation,

    #[error("belief-weighted mixture covariance is not positive definite (negative weights?)")]
    NonPdMixture,

    #[error("test point h={h} is invalid for state {state} in a {n}-state chain")]
    InvalidTestPoint { state: usize, h: i64, n: usize },

    #[error("likelihood underflow: all state likelihoods vanished for an observation")]
    DegenerateLikelihood,

    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },

    #[error("invalid config field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation { .. } | Error::Io(_) => 2,
            _ => 3,
        }
    }
}
