use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A configuration value breaks its invariants; detected before any work.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// Input data is malformed (non-finite coordinates, bad labels, ...).
    #[error("invalid data: {0}")]
    InvalidData(String),
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),
}

impl Error {
    pub(crate) fn length_mismatch(what: &str, expected: usize, found: usize) -> Self {
        Error::Contract(alloc::format!(
            "{what}: expected {expected} entries, found {found}"
        ))
    }
}
