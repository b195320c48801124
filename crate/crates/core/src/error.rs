use thiserror::Error;

/// Errors raised by the samplers, filters and data handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("nonstationary AR coefficient: |phi| = {0} >= 1")]
    Nonstationary(f64),

    #[error("state noise scale sigma must be nonzero")]
    ZeroSigma,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("all log-weights are -inf or NaN")]
    DegenerateWeights,

    #[error("particle weights collapsed at time index {t}")]
    WeightCollapse { t: usize },

    #[error("non-finite target density at the current chain state")]
    CorruptChainState,

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
