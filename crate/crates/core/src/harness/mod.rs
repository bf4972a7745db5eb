//! Command line, file formats, metrics and experiment configuration.

pub mod cli;
pub mod config;
pub mod io;
pub mod metrics;

pub use metrics::{compute_metrics, MetricsReport};
