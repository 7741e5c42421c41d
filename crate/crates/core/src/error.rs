use thiserror::Error;

/// Errors raised by the localization library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The sensor graph has more than one connected component.
    #[error("sensor graph is disconnected: sensor {unreachable} is not reachable from sensor 0")]
    DisconnectedGraph { unreachable: usize },

    /// No sensor is linked to any anchor.
    #[error("no sensor is linked to an anchor")]
    NoAnchorLink,

    #[error("malformed measurement: {0}")]
    MalformedMeasurement(String),

    #[error("could not generate a network satisfying the connectivity assumption after {attempts} attempts")]
    GenerationFailure { attempts: usize },

    #[error("iterate became non-finite at iteration {iteration}")]
    NumericalDivergence { iteration: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
