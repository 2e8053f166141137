//! Failure classes mapped to stable exit codes.

use std::fmt;

/// Exit-code classes: usage errors (2, matching the argument parser), input
/// parse/read failures (3), pipeline precondition failures (4), and
/// everything else (1).
#[derive(Debug)]
pub enum CliError {
    /// A flag or configured value outside its documented range.
    Usage(String),
    /// An input file that is missing or does not parse.
    Input(String),
    /// A precondition of the processing pipeline that the inputs violate.
    Pipeline(String),
    /// Output I/O and other unexpected failures.
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Input(_) => 3,
            CliError::Pipeline(_) => 4,
            CliError::Other(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Input(_) => "input",
            CliError::Pipeline(_) => "pipeline",
            CliError::Other(_) => "other",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::Pipeline(m) | CliError::Other(m) => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message())
    }
}

impl std::error::Error for CliError {}
