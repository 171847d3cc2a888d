use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("AR coefficient must satisfy |phi| < 1, got {0}")]
    NonStationaryAr(f64),
    #[error("innovation standard deviation must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("non-finite parameter: {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("largest singular value of the connectivity matrix is {0}, must be < 1")]
    NotContractive(f64),
    #[error("frequency {0} outside [-pi, pi]")]
    FrequencyOutOfRange(f64),
    #[error("series of length {len} too short for lag {lag}")]
    SeriesTooShort { len: usize, lag: usize },
    #[error("{0} must be at least 1")]
    ZeroLength(&'static str),
    #[error("matrix is not symmetric positive definite (min/max eigenvalue ratio {ratio:e})")]
    NotPositiveDefinite { ratio: f64 },
    #[error("state covariance is singular (condition number {condition:e}); reduce the system first")]
    SingularCovariance { condition: f64 },
    #[error("lag {tau} invalid for {mode} capacity over {len} samples")]
    InvalidLag { tau: i64, mode: &'static str, len: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("could not draw a system with full controllability rank after {0} attempts")]
    GenerationFailed(usize),
    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;
