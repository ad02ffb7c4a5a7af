//! Error classes of the command line and their exit codes.

use std::fmt;

/// Exit code for a numeric failure (no convergence, failed eigensolve...).
pub const EXIT_NUMERIC: i32 = 2;
/// Exit code for a malformed command line or configuration.
pub const EXIT_USAGE: i32 = 64;
/// Exit code for an unreadable or inconsistent input file.
pub const EXIT_DATA: i32 = 65;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn usage(e: modulon::Error) -> Self {
        CliError::Usage(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self {
            CliError::Usage(_) => "usage error",
            CliError::Data(_) => "bad data",
            CliError::Numeric(_) => "numeric failure",
        };
        write!(f, "{kind}: {}", self.message())
    }
}

/// Errors raised by the library during a computation. Parameter problems
/// the configuration checks cannot see in advance count as usage errors.
impl From<modulon::Error> for CliError {
    fn from(e: modulon::Error) -> Self {
        use modulon::Error as E;
        match e {
            E::Format(_) => CliError::Data(e.to_string()),
            E::Domain(_)
            | E::Unsupported(_)
            | E::GridMismatch(_)
            | E::DomainTooSmall { .. }
            | E::Approximation { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Numeric(format!("i/o: {e}"))
    }
}
