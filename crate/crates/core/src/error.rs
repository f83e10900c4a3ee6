use thiserror::Error;

/// Errors raised by the numeric kernels, the sampler and the analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("rank-one downdate would leave the matrix indefinite")]
    DowndateBrokePositivity,
    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("observation {0} is already assigned")]
    IndexAlreadyAssigned(usize),
    #[error("observation {0} is not assigned")]
    IndexNotAssigned(usize),
    #[error("observation index {index} out of range for {n} observations")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("component label {label} out of range for K = {k}")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("invalid block: {0}")]
    InvalidBlock(String),
    #[error("enumeration of {cells} block assignments exceeds the guard of {limit}")]
    EnumerationTooLarge { cells: u128, limit: u128 },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("marginal probability is degenerate (0 or 1)")]
    DegenerateMarginal,
    #[error("every indicator split has a degenerate marginal")]
    AllSplitsDegenerate,
    #[error("trace has no retained samples")]
    EmptyTrace,
    #[error("indicator series has zero variance")]
    DegenerateSeries,
    #[error("non-finite density encountered: {0}")]
    NonFinite(String),
    #[error("chain failed at iteration {iter}: {source}")]
    Chain { iter: u64, source: Box<Error> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("config parse error: {0}")]
    TomlDe(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
