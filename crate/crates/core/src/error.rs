use thiserror::Error;

/// Errors raised by the computational kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument {value} outside the domain of {function}")]
    Domain { function: &'static str, value: f64 },

    #[error("covariance is not positive semidefinite (eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("downlink channel matrix is rank deficient (condition number {condition:e})")]
    DegenerateChannel { condition: f64 },

    #[error("target rate of downlink user {user} is unreachable (tau = {tau:e})")]
    InfeasibleTarget { user: usize, tau: f64 },

    #[error("QR receiver needs at most {antennas} devices, got {devices}")]
    Overload { devices: usize, antennas: usize },

    #[error("whitened device channel matrix is rank deficient at column {column}")]
    RankDeficient { column: usize },

    #[error("objective or gradient oracle returned a non-finite value")]
    OracleNonFinite,

    #[error("feasible region is empty: constraint {constraint} has tau = {tau:e}")]
    InfeasibleRegion { constraint: usize, tau: f64 },

    #[error("decoding order is not a permutation of 0..{devices}")]
    InvalidOrder { devices: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),

    #[error("invalid configuration: {0}")]
    Config(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
