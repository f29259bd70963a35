//! File formats, dataset synthesis and the `geocorr` command-line tool built on
//! [`geocorr_core`].
//!
//! * [`flo`]: the dense flow file format.
//! * [`image_io`]: 8-bit PNG/JPEG reading and PNG writing with validity masks.
//! * [`sidecar`]: per-image prediction sidecars.
//! * [`dataset`]: synthetic dataset generation and its manifest.
//! * [`cli`]: the subcommands.

pub mod cli;
pub mod dataset;
mod error;
pub mod flo;
pub mod fsutil;
pub mod image_io;
pub mod report;
pub mod sidecar;

pub use error::{Error, Result};
pub use geocorr_core as core;
