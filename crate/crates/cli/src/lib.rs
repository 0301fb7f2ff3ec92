//! Scenario driver behind the `didauth` binary.
//!
//! Every command writes a line-oriented transcript (`STEP <name> OK|FAIL`)
//! to stdout. With a seed and a fixed clock the transcript is byte-identical
//! across runs.

pub mod bench;
pub mod config;
pub mod holder;
pub mod init;
pub mod login;
pub mod pki;
pub mod transcript;

use std::process::ExitCode;

use thiserror::Error;

pub use config::{ScenarioConfig, Seed, Settings};
pub use transcript::Transcript;

pub const EXIT_STEP_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_ACCESS_DENIED: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("step {step} failed: {reason}")]
    Step { step: String, reason: String },
    #[error("login refused by the holder: access_denied")]
    AccessDenied,
}

impl CliError {
    pub fn step(step: &str, reason: impl ToString) -> Self {
        CliError::Step { step: step.to_owned(), reason: reason.to_string() }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Step { .. } => EXIT_STEP_FAILED,
            CliError::AccessDenied => EXIT_ACCESS_DENIED,
        })
    }
}
