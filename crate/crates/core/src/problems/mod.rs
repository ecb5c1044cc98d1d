//! Local objectives, gradient oracles and datasets.

pub mod data;
pub mod objective;
pub mod oracle;

pub use data::{
    load_or_synthesize, partition, synthesize, DataSource, Dataset, Skew, SyntheticSpec,
};
pub use objective::{
    global_grad, global_optimum, global_value, max_smoothness, LocalObjective, Normalization,
    ObjectiveKind,
};
pub use oracle::{GradOracle, OracleMode};
