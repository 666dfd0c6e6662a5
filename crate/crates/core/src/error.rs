use thiserror::Error;

/// Errors raised anywhere in the fitting and inference pipeline.
#[derive(Debug, Error)]
pub enum GsimError {
    /// An argument fell outside the domain of a function (e.g. gamma cumulant at η ≥ 0).
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data is invalid for the requested model.
    #[error("data error: {0}")]
    Data(String),

    /// An iterative solver ran out of iterations.
    #[error("convergence error after {iterations} iterations: {message}")]
    Convergence { iterations: usize, message: String },

    /// Model fitting failed outright.
    #[error("fit error: {0}")]
    Fit(String),

    /// A matrix that must be inverted is singular, or a parameter sits on a boundary.
    #[error("singularity error: {0}")]
    Singular(String),

    /// A hypothesis constraint matrix is malformed.
    #[error("constraint error: {0}")]
    Constraint(String),

    /// Residual degrees of freedom are not positive.
    #[error("degenerate degrees of freedom: {0}")]
    DegenerateDf(String),

    /// A test statistic could not be formed.
    #[error("test error: {0}")]
    Test(String),

    /// Misuse of the API: incompatible fits, bad arguments.
    #[error("usage error: {0}")]
    Usage(String),

    /// A simulation study could not be completed.
    #[error("study error: {0}")]
    Study(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GsimError>;
