//! Experiment runner for the mls2mc samplers: configuration, synthetic
//! data, replicated sampler runs and cross-run comparison.

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::{cmd_compare, cmd_generate_data, cmd_replicate_example, cmd_run, CompareOptions, RunSummary};
pub use config::{ExampleKind, RawConfig, RunConfig, ToyConfig};
pub use manifest::RunManifest;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    /// Every replicate failed on a weight degeneracy.
    #[error("{0}")]
    Numerical(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Library(#[from] mls2mc::Error),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// 0 success, 2 configuration, 3 numerical failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        use mls2mc::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Library(e) => match e {
                E::Io(_) | E::Csv(_) => 4,
                E::NumericallySingular { .. }
                | E::BridgingCapExceeded { .. }
                | E::Numeric(_)
                | E::DegenerateKernel(_) => 3,
                _ => 2,
            },
        }
    }
}
