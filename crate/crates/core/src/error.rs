use std::path::PathBuf;

use thiserror::Error;

use crate::params::ParamError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {}", join_errors(.0))]
    Validation(Vec<ParamError>),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration length {got} does not match {expected} = n_parties * mem_per_party")]
    ConfigLength { expected: usize, got: usize },

    #[error("instance too large: {candidates} candidate subsets exceed the limit of {limit}")]
    InstanceTooLarge { candidates: u128, limit: u128 },

    #[error("the network-flow solver needs exactly 3 parties, got {0}")]
    FlowNeedsThreeParties(usize),

    #[error("analytic engine limited to {limit} memories in total, got {got} (use force to override)")]
    DimensionTooLarge { got: usize, limit: usize },

    #[error("fidelity {0} outside [1/4, 1]")]
    FidelityOutOfRange(f64),

    #[error("key-rate pipeline supports 2..=5 parties, got {0}")]
    UnsupportedPartyCount(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_errors(errors: &[ParamError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
