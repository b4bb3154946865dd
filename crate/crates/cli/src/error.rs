use std::fmt;

use vidclaim::embed::EmbedError;
use vidclaim::harness::HarnessError;
use vidclaim::pipeline::PipelineError;
use vidclaim::store::StoreError;
use vidclaim::transform::ClientError;

/// Failure classes with stable process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Validation found problems (exit 1).
    Findings(usize),
    /// Bad input, missing files, store errors (exit 2).
    Input(String),
    /// External service failure (exit 3).
    Service(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Findings(_) => 1,
            CliError::Input(_) => 2,
            CliError::Service(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Findings(n) => write!(f, "{n} violation(s) found"),
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Service(m) => write!(f, "service error: {m}"),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        CliError::Service(e.to_string())
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::BadFile { .. } => CliError::Input(e.to_string()),
            _ => CliError::Service(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        if e.is_service_failure() {
            CliError::Service(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

pub fn io_error(what: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", what.display()))
}
