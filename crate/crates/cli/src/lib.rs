//! Library half of the `shortmd` command: config parsing, output writers and
//! the subcommand implementations.

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;

/// Command failure, mapped onto the process exit status.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(std::io::Error),
    Physics(shortmd_core::Error),
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Physics(_) => 2,
            CliError::Mismatch(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::Physics(e) => write!(f, "physics error: {e}"),
            CliError::Mismatch(m) => write!(f, "verification mismatch: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

/// Physics failures keep their step and particle ids; anything else the core
/// rejects (bad parameters, impossible geometry) is a configuration problem.
impl From<shortmd_core::Error> for CliError {
    fn from(e: shortmd_core::Error) -> Self {
        if e.is_physics() {
            CliError::Physics(e)
        } else {
            CliError::Config(e.to_string())
        }
    }
}
