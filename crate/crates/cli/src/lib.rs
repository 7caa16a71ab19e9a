//! The `volcano` command line: single runs from a run-configuration document,
//! plan comparisons with average-rank reports, and prior-task store tools.

pub mod compare;
pub mod config;
pub mod metacmd;
pub mod run;

use thiserror::Error;

pub use compare::{compare_plans, relative_improvement, tied_ranks, Report, RunCell};
pub use config::{CommandSource, EnsembleConfig, MetaConfig, MetaMode, PlanChoice, RunConfig, Strategy};
pub use run::{cmd_run, execute_config, load_objective, LoadedObjective, RunOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    /// Bad flags, documents or input paths.
    #[error("{0}")]
    Usage(String),
    /// A failure while optimizing or writing results.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
