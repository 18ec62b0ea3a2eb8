//! Std companion of `fiberspec-core`: text file formats, run configuration,
//! multi-threaded drivers and the `fiberspec` command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod parallel;

pub use error::{AppError, AppResult};
