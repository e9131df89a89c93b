use std::fmt;
use std::path::Path;

/// Failure of a CLI command, grouped by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag combinations. Exit 2.
    Usage(String),
    /// Unreadable, malformed or inconsistent input. Exit 3.
    Data(String),
    /// A library precondition was broken. Exit 4.
    Contract(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Contract(_) => 4,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    pub fn at(path: &Path, msg: impl fmt::Display) -> Self {
        CliError::Data(format!("{}: {msg}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Contract(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<pillarvote_core::Error> for CliError {
    fn from(e: pillarvote_core::Error) -> Self {
        use pillarvote_core::Error as E;
        match e {
            E::InvalidConfig(_) => CliError::Usage(e.to_string()),
            E::InvalidData(_) => CliError::Data(e.to_string()),
            E::Contract(_) => CliError::Contract(e.to_string()),
        }
    }
}
