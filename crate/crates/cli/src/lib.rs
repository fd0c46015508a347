//! Command-line front end for the anisotropic denoising engine: image I/O,
//! configuration and pipeline orchestration.

pub mod config;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod pnm;

pub use config::{Args, Mode, RunConfig};
pub use error::CliError;
pub use pipeline::{execute, filter_image, Report};
