use thiserror::Error;

/// Errors produced by the simulation and analysis pipeline.
#[derive(Debug, Error)]
pub enum QdmError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("mode index {mode} out of range for a {n_modes}-mode system")]
    ModeOutOfRange { mode: usize, n_modes: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("covariance is not a physical state: smallest symplectic eigenvalue {min_eigenvalue:.3e} < 1/2")]
    NotPhysical { min_eigenvalue: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("signal at {frequency} Hz is above the Nyquist frequency {nyquist} Hz; raise sample_rate above {min_rate} Hz")]
    Aliasing { frequency: f64, nyquist: f64, min_rate: f64 },

    #[error("record of {samples} samples is shorter than one {segment}-sample segment; increase duration or rbw")]
    RecordTooShort { samples: usize, segment: usize },

    #[error("spectra do not share a frequency grid: {0}")]
    GridMismatch(String),

    #[error("{n_averages} averages is below the required minimum of {required}")]
    InsufficientAverages { n_averages: usize, required: usize },

    #[error("relative angle is degenerate (theta = {theta} rad); angle inversion needs sin(theta) != 0")]
    DegenerateTheta { theta: f64 },

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = QdmError> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> QdmError {
    QdmError::InvalidParameter { name, reason: reason.into() }
}
