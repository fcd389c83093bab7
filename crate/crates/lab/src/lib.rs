//! Monte Carlo studies, closed-form bound evaluation and the `nmv-lab`
//! command line for the `nmv_core` schemes.
//!
//! Every study parallelises over replicas with [`Runner`] and reduces the
//! per-replica results in index order, so outputs do not depend on the
//! number of worker threads.

// `!(x > 0.0)` rejects NaN as well, which `x <= 0.0` would not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod output;
pub mod runner;
pub mod studies;

pub use config::{Experiment, ExperimentConfig};
pub use runner::Runner;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] nmv_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("output error: {0}")]
    Output(String),
}

impl LabError {
    /// 1 for invalid input, 2 for failures while computing or writing results.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 1,
            LabError::Core(nmv_core::Error::FixedPoint { .. }) => 2,
            LabError::Core(_) => 1,
            LabError::Io(_) | LabError::Output(_) => 2,
        }
    }
}

impl From<csv::Error> for LabError {
    fn from(e: csv::Error) -> Self {
        LabError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        LabError::Output(e.to_string())
    }
}
