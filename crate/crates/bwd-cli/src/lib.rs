//! Harness library behind the `bwd` binary: experiment configuration, the
//! replication runner, streaming assignment with persistence, and timing
//! benchmarks. The binary is a thin argument-parsing shell over these
//! modules, so integration tests can drive the same code paths in-process.

pub mod bench;
pub mod config;
pub mod driver;
pub mod persist;
pub mod runner;
pub mod stream;

use thiserror::Error;

/// Harness-level failure, split by exit code: configuration and usage
/// problems exit 1, runtime problems (I/O, horizon, malformed state) exit 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    /// Wraps an I/O error with the path it concerns.
    pub fn io(context: &str, path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Runtime(format!("{context} {}: {err}", path.display()))
    }
}
