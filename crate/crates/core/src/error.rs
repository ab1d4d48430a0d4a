use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A mathematical precondition does not hold (e.g. `c(psi)` with psi < 2).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid label token {0:?} (expected normal|anomaly|0|1)")]
    InvalidLabel(String),

    #[error("feature count mismatch: expected {expected} features, got {got}")]
    FeatureMismatch { expected: usize, got: usize },

    /// No more queries can be issued: the budget is spent or the pool is empty.
    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),

    /// The active-learning protocol was violated (e.g. labeling a point twice).
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("oracle abstained on point {0}")]
    Abstained(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("plan error: {0}")]
    Plan(String),
}
