//! CLI error classes mapped to the documented exit codes.

use std::fmt;

/// Exit-code contract: 0 ok, 1 load/parse, 2 shape, 3 parameter,
/// 4 desk scale, 5 oracle discrepancy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Unreadable or unparseable model input, unknown preset name.
    Load(String),
    /// Shape propagation failed.
    Shape(String),
    /// Invalid numeric parameter or configuration.
    Param(String),
    /// Model too large for the counting executor.
    DeskScale(String),
    /// Executor counts diverged from the analytic formulas outside the
    /// declared pattern.
    Discrepancy(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Load(_) => 1,
            CliError::Shape(_) => 2,
            CliError::Param(_) => 3,
            CliError::DeskScale(_) => 4,
            CliError::Discrepancy(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Load(m)
            | CliError::Shape(m)
            | CliError::Param(m)
            | CliError::DeskScale(m)
            | CliError::Discrepancy(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}
