use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("root bracketing failed: {0}")]
    Bracket(String),

    #[error("user {user} has zero SINR at the expansion point; start from the max-min SINR initialization")]
    ZeroSinrExpansion { user: usize },

    #[error("convex subproblem is infeasible (phase-1 slack {slack:.3e})")]
    Infeasible { slack: f64 },

    #[error("rate thresholds cannot be met by the surrogate problem")]
    InfeasibleThresholds,

    #[error("initialization infeasible: minimum SINR {min_sinr:.4e} does not exceed {gamma_zero:.4e}")]
    InitializationInfeasible { min_sinr: f64, gamma_zero: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
