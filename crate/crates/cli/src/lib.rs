//! Library side of the `lclab` command: suite configuration, measure
//! construction, check execution and report output.

pub mod config;
pub mod emit;
pub mod measures;
pub mod suite;

pub use config::{SuiteConfig, DEFAULT_SUITE};
pub use suite::{run_suite, RunOptions, SuiteOutcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Check(#[from] lclab::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    /// 2 for configuration and input problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid(_) | CliError::Io(_) => 2,
            CliError::Check(_) => 1,
        }
    }
}
