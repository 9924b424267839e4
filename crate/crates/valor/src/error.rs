use thiserror::Error;

use crate::cdp::ObsId;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid process spec: {0}")]
    InvalidSpec(String),

    #[error("policy undefined on observation {obs:?} at level {level}")]
    PolicyUndefined { level: usize, obs: ObsId },

    #[error("path of length {len} too long for horizon {horizon}")]
    PathTooLong { len: usize, horizon: usize },

    #[error("path semantics require deterministic hidden-state dynamics")]
    StochasticPath,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("unknown observation {0:?} for this function class")]
    UnknownObservation(ObsId),

    #[error("unknown function or policy handle")]
    UnknownHandle,

    #[error("optimization program infeasible: {0}")]
    Infeasible(String),

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("no dataset stored at level {level}")]
    EmptyStore { level: usize },

    #[error("parameter overflow: {0}; use practical mode with explicit sample counts")]
    ParamsOverflow(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("DIMACS parse error: {0}")]
    Dimacs(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
