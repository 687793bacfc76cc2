//! Experiment pipeline behind the `lpvrom` command: configuration, cached
//! artifacts and the CSV tables.

pub mod cache;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use pipeline::{Pipeline, Summary};
