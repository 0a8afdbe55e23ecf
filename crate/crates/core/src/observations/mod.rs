//! Observation models, their projections and equivalent noise levels.

mod linear;
mod nonlinear;
mod projections;
mod spectral;
mod tasks;

pub use linear::{
    AvgPoolOperator, CircularConvolution, DenseOperator, IdentityBlock, LinearOperator, MaskOperator, OperatorKind,
    SumOperator,
};
pub use nonlinear::{project_gradient_fallback, project_hdr, HdrOperator, NonlinearOperator, PhaseRetrieval};
pub use projections::{
    project_avgpool, project_circular_deblur, project_identity_block, project_linear, project_mask, project_sum,
};
pub use spectral::{svd_decouple, SpectralComponent, SpectralObservation};
pub use tasks::{equivalent_noise, Geometry, TaskKind};

use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservationError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid operator: {0}")]
    Invalid(String),
    #[error("observation out of range: {0}")]
    Range(String),
    #[error("non-finite values during {0}")]
    NonFinite(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub(crate) fn check_len(what: &str, expected: usize, got: usize) -> Result<(), ObservationError> {
    if expected == got {
        Ok(())
    } else {
        Err(ObservationError::Shape(format!("{what}: expected length {expected}, got {got}")))
    }
}

/// Relative threshold below which a singular value counts as zero.
pub const NULL_TOLERANCE: f64 = 1e-10;
