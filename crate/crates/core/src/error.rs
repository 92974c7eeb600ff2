use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// ZF needs `G <= M` and linearly independent composite estimates.
    #[error("rank deficient composite channel: {groups} groups on {antennas} antennas (condition number {condition:.3e})")]
    RankDeficient {
        groups: usize,
        antennas: usize,
        condition: f64,
    },

    /// `tau_p = G` pilots leave no room for data in the coherence block.
    #[error("{tau_p} pilot symbols do not fit a coherence block of {tau_c}")]
    PilotOverhead { tau_p: usize, tau_c: usize },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// Errors that make a particular grouping unservable rather than
    /// indicating a bug or bad input.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::RankDeficient { .. } | Error::PilotOverhead { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
