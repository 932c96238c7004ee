use std::fmt;

/// Failure of a subcommand, carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unreadable or invalid config, I/O trouble.
    Usage(String),
    /// An invariant or verification check failed.
    Verification(String),
    /// The solver hit its iteration cap and `--strict` was given.
    NonConvergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Verification(_) => 2,
            CliError::NonConvergence(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
            CliError::NonConvergence(m) => write!(f, "solver did not converge: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<replab::Error> for CliError {
    fn from(e: replab::Error) -> Self {
        match e {
            replab::Error::Invariant { .. } => CliError::Verification(e.to_string()),
            replab::Error::NotConverged { .. } | replab::Error::ProjectionNotConverged { .. } => {
                CliError::NonConvergence(e.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
