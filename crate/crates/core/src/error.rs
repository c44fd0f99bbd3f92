use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty region: {0}")]
    EmptyRegion(String),

    /// The grid is too coarse for the requested construction.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// A hypothesis certificate does not hold for the given function.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    /// The certification pipeline could not be completed.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An inequality that must hold by construction did not.
    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error("malformed mask raster: {0}")]
    Raster(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
