//! Library side of the `dms` command-line tool: configuration, scenario
//! file I/O, and the command implementations. The binary in `main.rs` is a
//! thin argument-parsing shell over this crate so that integration tests
//! can drive the same code paths directly.

pub mod commands;
pub mod config;
pub mod scenario;

/// Error taxonomy mapped onto the process exit-code contract:
/// data/input problems exit 2, configuration problems exit 3.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Data(_) => 2,
            CliError::Config(_) => 3,
        }
    }
}
