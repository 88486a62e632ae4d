//! File formats, the experiment harness and the command line for
//! [`unconfused_core`].

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;

pub use config::{ExperimentConfig, Overrides};
pub use error::{AppError, Result};
