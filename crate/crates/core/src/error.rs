use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operator is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("eigensolver did not converge")]
    ConvergenceFailure,

    #[error("invalid angular momentum {0}: 2j must be a nonnegative integer")]
    InvalidSpin(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("invalid system specification: {0}")]
    InvalidSpec(String),

    #[error("field loop needs at least 8 samples, got {0}")]
    TooFewSamples(usize),

    #[error("band tracking failed at sample {sample}: subspace overlap {overlap:.4} < 0.9 (loop too coarse)")]
    TrackingFailure { sample: usize, overlap: f64 },

    #[error("degenerate block structure changed along the loop at sample {sample}")]
    BlockInstability { sample: usize },

    #[error("band {band} belongs to a degenerate block of dimension {dim}")]
    DegenerateBand { band: usize, dim: usize },

    #[error("no band with index {0}")]
    NoSuchBand(usize),

    #[error("band {band} is not an eigenstate of the axis projection (<S_z'> = {value:.9})")]
    NotProjectionEigenstate { band: usize, value: f64 },

    #[error("evolution left the adiabatic band: |overlap| = {overlap:.6} < 0.99")]
    NonAdiabatic { overlap: f64 },

    #[error("no closed-form table for {0}")]
    UnsupportedKind(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotHermitian { .. }
                | Error::ConvergenceFailure
                | Error::TrackingFailure { .. }
                | Error::BlockInstability { .. }
                | Error::NotProjectionEigenstate { .. }
                | Error::NonAdiabatic { .. }
        )
    }
}
