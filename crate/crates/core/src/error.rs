use thiserror::Error;

use crate::spatial::{FrameId, VectorKind};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frame mismatch: expected {expected}, found {found}")]
    FrameMismatch { expected: FrameId, found: FrameId },

    #[error("vector kind mismatch: expected {expected:?}, found {found:?}")]
    KindMismatch {
        expected: VectorKind,
        found: VectorKind,
    },

    #[error("rotation is not orthonormal with det +1 (residual {residual:.3e})")]
    NotARotation { residual: f64 },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    Asymmetric { asymmetry: f64 },

    #[error("{what} is not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { what: String, min_eigenvalue: f64 },

    #[error("{what} is singular")]
    Singular { what: String },

    #[error("inertial parameters are not physically consistent (min pseudo-inertia eigenvalue {min_eigenvalue:.3e})")]
    InconsistentInertia { min_eigenvalue: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("Euler XYZ representation singularity (beta = {beta:.6} rad)")]
    EulerSingularity { beta: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("simulation diverged at t = {time:.6} s: {reason}")]
    Diverged { time: f64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
