use thiserror::Error;

/// Everything that can go wrong between reading a dataset and reporting an
/// estimate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no units or no clusters supplied")]
    EmptyInput,
    #[error("unit '{unit_id}' refers to unknown cluster '{cluster_id}'")]
    DanglingClusterRef { unit_id: String, cluster_id: String },
    #[error("cluster id '{0}' appears more than once")]
    DuplicateClusterId(String),
    #[error("inconsistent covariate schema: {0}")]
    InconsistentSchema(String),
    #[error("cluster '{0}' has no units")]
    EmptyCluster(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{file}: line {line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },
    #[error("{file}: {message}")]
    Io { file: String, message: String },

    #[error("quantile level {0} must lie strictly inside (0, 1)")]
    BadQuantileLevel(f64),
    #[error("bad aggregate rule '{0}'")]
    BadAggregateRule(String),
    #[error("aggregate table has no row for cluster '{0}'")]
    MissingClusterRow(String),
    #[error("aggregate spec names unknown unit covariate '{0}'")]
    UnknownCovariate(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("stage order violation: {0}")]
    StageOrderViolation(String),

    #[error("adjustment set requires cluster aggregates but none were supplied")]
    MissingAggregates,
    #[error("least squares needs at least one row")]
    NoRows,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("estimation needs at least one treated and one control cluster (treated: {treated}, control: {control})")]
    OneArmEmpty { treated: usize, control: usize },

    #[error("bootstrap needs at least 2 replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("only {successful} of {requested} bootstrap replicates had both arms after {attempts} attempts")]
    TooManyDegenerateReplicates {
        requested: usize,
        successful: usize,
        attempts: usize,
    },

    #[error("pooled standard deviation is zero")]
    ZeroPooledSd,
    #[error("standardized difference needs non-empty samples")]
    EmptySample,
}

/// Coarse grouping used to map errors onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Ingestion,
    Estimation,
    Internal,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            EmptyInput
            | DanglingClusterRef { .. }
            | DuplicateClusterId(_)
            | InconsistentSchema(_)
            | EmptyCluster(_)
            | NonFinite(_)
            | Parse { .. }
            | Io { .. }
            | UnknownCovariate(_)
            | BadAggregateRule(_)
            | BadQuantileLevel(_) => ErrorCategory::Ingestion,
            MissingAggregates
            | NoRows
            | OneArmEmpty { .. }
            | TooFewReplicates(_)
            | TooManyDegenerateReplicates { .. }
            | ZeroPooledSd
            | EmptySample
            | InvalidConfig(_) => ErrorCategory::Estimation,
            MissingClusterRow(_) | StageOrderViolation(_) | DimensionMismatch(_) => {
                ErrorCategory::Internal
            }
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
