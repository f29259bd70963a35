use thiserror::Error;

use crate::models::DistortionType;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {left_width}x{left_height} vs {right_width}x{right_height}")]
    DimensionMismatch {
        left_width: usize,
        left_height: usize,
        right_width: usize,
        right_height: usize,
    },
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("invalid parameters for {kind:?}: {reason}")]
    InvalidParams {
        kind: DistortionType,
        reason: &'static str,
    },
    #[error("singular mapping at ({x}, {y})")]
    SingularMapping { x: f64, y: f64 },
    #[error("point ({x}, {y}) lies outside the sampling domain")]
    OutOfBounds { x: f64, y: f64 },
    #[error("uninformative pixel")]
    Uninformative,
    #[error("valid region {width}x{height} is smaller than the required {min_width}x{min_height}")]
    CropTooSmall {
        width: usize,
        height: usize,
        min_width: usize,
        min_height: usize,
    },
    #[error("insufficient data: {usable} usable estimates, need at least {required}")]
    InsufficientData { usable: usize, required: usize },
    #[error("no distortion model could be fitted")]
    Unidentifiable,
    #[error("flow provider failed: {0}")]
    Provider(alloc::string::String),
}

impl Error {
    pub(crate) fn mismatch(a: (usize, usize), b: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            left_width: a.0,
            left_height: a.1,
            right_width: b.0,
            right_height: b.1,
        }
    }
}
