use thiserror::Error;

use crate::milp::MilpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("inconsistent horizon: {0}")]
    InconsistentHorizon(String),

    #[error("invalid scenario set: {0}")]
    InvalidScenarioSet(String),

    #[error("invalid reduced set: {0}")]
    InvalidReduction(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} exceeds the desk-scale cap: n = {n}, cap = {cap}")]
    DeskScaleCap { what: &'static str, n: usize, cap: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("OG% undefined for non-positive baseline (benchmark objective {0})")]
    NonPositiveBaseline(f64),

    #[error("solver error: {0}")]
    Solver(#[from] MilpError),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
