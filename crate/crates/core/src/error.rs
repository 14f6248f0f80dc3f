use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a model invariant.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("cannot enumerate {bands}^{stations} band assignments; use Monte Carlo instead")]
    EnumerationTooLarge { stations: u32, bands: u32 },

    #[error("no completed packets: delay distribution is empty")]
    EmptyDelays,

    #[error("division by zero in gain computation")]
    DivisionByZero,

    #[error("run ({stations} stations, {bands} bands, seed {seed}) failed: {reason}")]
    RunFailed {
        stations: usize,
        bands: usize,
        seed: u64,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
