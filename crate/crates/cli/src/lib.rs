//! Experiment harness for `nuisance-grad`: configs, replicated runs, reports and the acceptance suite.

pub mod config;
pub mod metrics;
pub mod pipeline;
pub mod plot;
pub mod report;
pub mod verify;

pub use config::{ConfigError, RunConfig};
pub use pipeline::{run, Formats, Report, RunError, RunOptions};
