use thiserror::Error;

use crate::lp::LpError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("service rate {rate} does not exceed arrival rate {arrival} for group {group}")]
    InfeasibleRates { group: usize, rate: f64, arrival: f64 },
    #[error("bad starting point: {0}")]
    BadStart(String),
    #[error("support reduction left {support} patterns for {groups} groups")]
    ReductionIncomplete { support: usize, groups: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
