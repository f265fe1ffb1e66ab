use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification of an [`Error`], used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed input text or arguments (policies, credentials, scenarios, labels).
    Input,
    /// A cryptographic operation refused or failed.
    Crypto,
    /// A serialized object could not be decoded.
    Format,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("policy syntax error at byte {position}: {message}")]
    PolicySyntax { position: usize, message: String },

    #[error("threshold {threshold} out of range for a gate with {children} children")]
    ThresholdOutOfRange { threshold: usize, children: usize },

    #[error("invalid attribute {0:?}")]
    InvalidAttribute(String),

    #[error("invalid label {0:?}")]
    InvalidLabel(String),

    #[error("invalid interpolation set: {0}")]
    InvalidInterpolationSet(&'static str),

    #[error("policy not satisfied")]
    PolicyNotSatisfied,

    #[error("epoch mismatch: expected epoch {expected}, got {found}")]
    EpochMismatch { expected: u64, found: u64 },

    #[error("attribute set is empty")]
    EmptyAttributeSet,

    #[error("forged path must keep the authority at depth {expected}, got {found} labels")]
    ForgedPathDepth { expected: usize, found: usize },

    #[error("merge refused: {0}")]
    MergeRefused(&'static str),

    #[error("authenticated decryption failed")]
    AuthenticationFailed,

    #[error("unsupported DEM algorithm id {0:#04x}")]
    UnsupportedDem(u8),

    #[error("credential syntax error on line {line}: {message}")]
    CredentialSyntax { line: usize, message: String },

    #[error("attribute map syntax error on line {line}: {message}")]
    AttributeMapSyntax { line: usize, message: String },

    #[error("scenario error on line {line}: {message}")]
    Scenario { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::PolicyNotSatisfied
            | Error::EpochMismatch { .. }
            | Error::EmptyAttributeSet
            | Error::ForgedPathDepth { .. }
            | Error::MergeRefused(_)
            | Error::AuthenticationFailed => ErrorKind::Crypto,
            Error::UnsupportedDem(_) | Error::Format(_) => ErrorKind::Format,
            _ => ErrorKind::Input,
        }
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
