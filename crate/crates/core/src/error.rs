use thiserror::Error;

/// Errors produced by the mixture learning toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("covariance not positive definite")]
    NotPositiveDefinite,

    #[error("covariance not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("weights do not sum to 1 (sum = {0})")]
    WeightSum(f64),

    #[error("negative weight {0}")]
    NegativeWeight(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("component starvation: component {component} weight {weight:e}")]
    ComponentStarvation { component: usize, weight: f64 },

    #[error("eigendecomposition failed")]
    Eigen,

    #[error("transport solver did not terminate after {0} pivots")]
    PivotLimit(usize),

    #[error("reduction left component {0} with no transported mass after reseeding")]
    EmptyComponent(usize),

    #[error("target MaxOmega {target} unreachable: achievable range [{low}, {high}]")]
    OverlapUnreachable { target: f64, low: f64, high: f64 },

    #[error("shard {shard}: {source}")]
    Shard {
        shard: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("schema: {0}")]
    Schema(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical routines, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::ComponentStarvation { .. }
            | Error::Eigen
            | Error::PivotLimit(_)
            | Error::EmptyComponent(_)
            | Error::OverlapUnreachable { .. } => true,
            Error::Shard { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
