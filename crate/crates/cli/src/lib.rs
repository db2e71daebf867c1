//! Batch driver for the verification engine: configuration, suite runs and
//! report emission.

pub mod config;
pub mod report;
pub mod suite;

pub use config::{CheckId, ConfigError, Format, RunConfig};
pub use suite::{run, Entry, SuiteError, SuiteReport, Verdict, SCHEMA_VERSION};
