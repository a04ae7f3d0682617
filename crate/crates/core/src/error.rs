use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate position: zero vector has no direction to preserve")]
    DegeneratePosition,

    #[error("singular geometry: state is {distance:.3} m from site {site} (minimum {min:.0} m)")]
    SingularGeometry { site: usize, distance: f64, min: f64 },

    #[error("length mismatch: {sites} sites but {measurements} measurements")]
    LengthMismatch { sites: usize, measurements: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("implausible noise configuration: {retries} consecutive non-positive range draws")]
    ImplausibleNoise { retries: usize },

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    #[error("consistency sweep failed: {failures} of {trials} solves did not converge at N = {radar_count}")]
    SweepFailureRate {
        radar_count: usize,
        failures: usize,
        trials: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

impl Error {
    /// Attaches the offending site index to a geometry error.
    pub(crate) fn at_site(self, index: usize) -> Self {
        match self {
            Error::SingularGeometry { distance, min, .. } => Error::SingularGeometry {
                site: index,
                distance,
                min,
            },
            other => other,
        }
    }
}
