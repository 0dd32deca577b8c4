//! Error taxonomy shared across the crate.

use thiserror::Error;

/// Errors surfaced by the bound computations and the scenario layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),

    #[error("invalid noise density: N0 must be positive, got {0}")]
    InvalidNoise(f64),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid channel model parameter: {0}")]
    ModelParameter(String),

    #[error("inconsistent scenario: {0}")]
    InconsistentScenario(String),

    #[error("singular nuisance block: {0}")]
    SingularNuisance(String),

    /// The position EFIM is rank deficient; the offending matrix is carried
    /// (as `f64`) so callers can inspect the surviving direction.
    #[error("unlocalizable geometry: position EFIM is singular")]
    UnlocalizableGeometry { efim: [[f64; 2]; 2] },

    #[error("inconsistent prior: {0}")]
    InconsistentPrior(String),

    #[error("singular path-overlap system: {0}")]
    SingularPathOverlap(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
