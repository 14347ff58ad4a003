use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("bound override on variable {var} loosens [{lo}, {hi}] to [{new_lo}, {new_hi}]")]
    LooseningOverride {
        var: usize,
        lo: f64,
        hi: f64,
        new_lo: f64,
        new_hi: f64,
    },

    #[error("variable index {0} out of range")]
    VariableOutOfRange(usize),

    #[error("{count} binaries exceed the enumeration limit of {limit}")]
    EnumerationGuard { count: usize, limit: usize },

    #[error("closed loop aborted at step {step}: {reason}")]
    ClosedLoop { step: usize, reason: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
