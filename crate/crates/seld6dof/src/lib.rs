//! File formats, run configuration and the pipeline commands built on
//! `seld6dof-core`: simulate → featurize → train → eval → report.

pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod io;
pub mod report;
pub mod train;

pub use config::RunConfig;
pub use error::{AppError, Result};
