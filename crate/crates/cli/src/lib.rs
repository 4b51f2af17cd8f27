//! Command implementations behind the `nodegen` binary.

pub mod commands;
pub mod config;

use thiserror::Error;

pub use commands::{cmd_bench, cmd_evolve, cmd_seed, EvolveSummary, MANIFEST_FILE};
pub use config::{Overrides, RunConfig};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    /// I/O or evaluator failure during a run.
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const BUDGET_EXHAUSTED: i32 = 3;
    /// The evolution limit was reached before the goal was met.
    pub const EVOLUTIONS_EXHAUSTED: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Run(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io(_) | CliError::Run(_) => exit::FAILURE,
        }
    }
}
