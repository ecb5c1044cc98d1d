//! Metrics, configuration, presets and the experiment runner.

pub mod checks;
pub mod config;
pub mod metrics;
pub mod presets;
pub mod runner;

pub use config::{ExperimentConfig, Gamma};
pub use metrics::{snapshot, MetricRow};
pub use presets::{preset, PRESET_NAMES};
pub use runner::{build_problem, run_experiment, run_problem, write_outputs, Problem, RunOutput};

use crate::error::Error;

/// Machine-readable error tag and process exit status.
pub fn error_class(e: &Error) -> (&'static str, i32) {
    match e {
        Error::Divergence { .. } => ("divergence", 2),
        Error::NumericDomain(_) => ("numeric", 2),
        Error::Equivalence { .. } => ("equivalence", 3),
        Error::Config(_) => ("config", 1),
        Error::Io(_) => ("io", 1),
        Error::Parse { .. } => ("parse", 1),
        Error::AssumptionViolated(_) => ("assumption", 1),
        Error::InvalidSize(_) => ("size", 1),
        Error::InvalidPartition(_) => ("partition", 1),
        Error::Protocol { .. } => ("protocol", 1),
        Error::Unsupported(_) => ("unsupported", 1),
        Error::Domain(_) => ("domain", 1),
        Error::InsufficientData(_) => ("data", 1),
    }
}
