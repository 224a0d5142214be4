//! Library side of the batch CLI: manifests, feature tables, reports,
//! plots, and the study workflows.

pub mod commands;
pub mod error;
pub mod features_io;
pub mod manifest;
pub mod plot;
pub mod report;
pub mod studies;

pub use error::{CliError, CliResult};
