//! Batch front-end for space-split sensitivity runs: TOML configuration, CSV
//! reports and a validation pass.

pub mod config;
pub mod report;
pub mod run;

pub use config::{Mode, RunConfig};
pub use run::{run, validate, RunReport, ValidationReport};
