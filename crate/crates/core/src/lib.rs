//! Geometric distortion correction primitives.
//!
//! This crate carries the pure algorithmic side of the toolkit and has no I/O
//! dependencies. It builds without `std` (an allocator is still required);
//! the `std` feature restores the standard library and `parallel` enables the
//! rayon-backed data-parallel paths.
//!
//! * [`types`]: raster and flow containers, pixel/normalized coordinates, EPE.
//! * [`models`]: the six parametric distortion models, dense flow generation
//!   and per-pixel parameter inversion.
//! * [`synth`]: warping source images into distorted/flow training pairs.
//! * [`fitting`]: Hough-voting model fits over dense flow fields.
//! * [`resample`]: derivative-initialized iterative backward mapping.
//! * [`apps`]: distortion transfer, exaggeration and iterative correction.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod apps;
mod error;
pub mod fitting;
mod math;
pub mod models;
mod par;
pub mod resample;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use fitting::{hough_fit, identify_model, refine_flow, FitResult, HoughAccumulator};
pub use models::{DistortionParams, DistortionType, ParamRange};
pub use resample::{resample, solve_pixel, BoundaryPolicy, ResampleOptions, ResampleReport};
pub use types::{
    epe, sample_flow_bilinear, scale_flow, FlowField, ImageBuffer, NormalizedCoords, Point,
};
