use thiserror::Error;

/// Errors raised anywhere in the cut laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    Validation(String),

    #[error("bound trace invariant violated: {0}")]
    InvariantViolation(String),

    #[error("improvement metric undefined: reference value is zero")]
    UndefinedMetric,

    #[error("degenerate pivot: only pivot candidates below {threshold:e} remain")]
    DegeneratePivot { threshold: f64 },

    #[error("simplex iteration limit of {0} reached")]
    IterationLimit(usize),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("episode invalid: {0}")]
    EpisodeInvalid(String),

    #[error("action contract violated: {0}")]
    ActionContract(String),

    #[error("enumeration budget exceeded: {points} lattice points > budget {budget}")]
    BudgetExceeded { points: f64, budget: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("convergence failure after {0} iterations")]
    ConvergenceFailure(usize),

    #[error("training diverged: mean |param| = {0:.3e}")]
    Diverged(f64),

    #[error("no rule could be extracted: every selection was empty")]
    EmptyRule,

    #[error("config error(s): {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
