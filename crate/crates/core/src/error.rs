use thiserror::Error;

/// Errors raised by the engine.
///
/// The variants map onto the CLI exit codes: validation problems exit with 2,
/// capability limits with 3 and broken internal invariants with 4.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Inputs outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The request is well formed but exceeds what the engine supports.
    #[error("capability error: {0}")]
    Capability(String),
    /// Malformed scenario input, naming the offending field.
    #[error("validation error at `{field}`: {constraint}")]
    Validation { field: String, constraint: String },
    /// A result that should be impossible (e.g. an audit pattern the theory forbids).
    #[error("invariant violation: {0}")]
    Invariant(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn capability(msg: impl Into<String>) -> Self {
        Error::Capability(msg.into())
    }

    pub fn validation(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            constraint: constraint.into(),
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Validation { .. } => 2,
            Error::Capability(_) => 3,
            Error::Invariant(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
