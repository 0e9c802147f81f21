use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors surfaced by every layer of the store.
///
/// Variants that travel over the wire map to a stable numeric code, see
/// [`Error::wire_code`] and [`Error::from_wire`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("already exists: {0}")]
    AlreadyExists(String),

    #[error("not a directory: {0}")]
    NotADirectory(String),

    #[error("is a directory: {0}")]
    IsADirectory(String),

    #[error("bad descriptor: {0}")]
    BadDescriptor(u64),

    #[error("node {node} does not own {path}")]
    NotOwner { node: u32, path: String },

    #[error("corrupt partition {partition}: entry {entry}: {reason}")]
    CorruptPartition {
        partition: String,
        entry: u32,
        reason: String,
    },

    #[error("corrupt data: {0}")]
    Corrupt(String),

    #[error("path too long ({len} bytes, max {max}): {path}")]
    PathTooLong { path: String, len: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed frame: {0}")]
    Malformed(String),

    #[error("frame too large: {len} bytes exceeds {max}")]
    FrameTooLarge { len: u64, max: u64 },

    #[error("resource exhausted: {0}")]
    ResourceExhausted(String),

    #[error("peer unavailable: {0}")]
    Unavailable(String),

    #[error("request timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("node not ready")]
    NotReady,

    #[error("remote error {code}: {message}")]
    Remote { code: u16, message: String },
}

pub mod code {
    pub const MALFORMED: u16 = 1;
    pub const NOT_FOUND: u16 = 2;
    pub const ALREADY_EXISTS: u16 = 3;
    pub const IO: u16 = 4;
    pub const NOT_OWNER: u16 = 5;
    pub const TOO_LARGE: u16 = 6;
    pub const CORRUPT: u16 = 7;
    pub const NOT_A_DIRECTORY: u16 = 8;
    pub const IS_A_DIRECTORY: u16 = 9;
    pub const BAD_DESCRIPTOR: u16 = 10;
    pub const INVALID: u16 = 11;
    pub const RESOURCE_EXHAUSTED: u16 = 12;
    pub const NOT_READY: u16 = 13;
    pub const UNAVAILABLE: u16 = 14;
}

impl Error {
    pub fn wire_code(&self) -> u16 {
        match self {
            Error::Io(_) => code::IO,
            Error::NotFound(_) => code::NOT_FOUND,
            Error::AlreadyExists(_) => code::ALREADY_EXISTS,
            Error::NotADirectory(_) => code::NOT_A_DIRECTORY,
            Error::IsADirectory(_) => code::IS_A_DIRECTORY,
            Error::BadDescriptor(_) => code::BAD_DESCRIPTOR,
            Error::NotOwner { .. } => code::NOT_OWNER,
            Error::CorruptPartition { .. } | Error::Corrupt(_) => code::CORRUPT,
            Error::PathTooLong { .. } | Error::InvalidArgument(_) => code::INVALID,
            Error::Malformed(_) => code::MALFORMED,
            Error::FrameTooLarge { .. } => code::TOO_LARGE,
            Error::ResourceExhausted(_) => code::RESOURCE_EXHAUSTED,
            Error::Unavailable(_) | Error::Timeout(_) => code::UNAVAILABLE,
            Error::NotReady => code::NOT_READY,
            Error::Remote { code, .. } => *code,
        }
    }

    /// Rebuilds a local error from an ERR frame so callers can match on the
    /// usual variants regardless of where the failure happened.
    pub fn from_wire(code: u16, message: String) -> Error {
        match code {
            code::NOT_FOUND => Error::NotFound(message),
            code::ALREADY_EXISTS => Error::AlreadyExists(message),
            code::NOT_A_DIRECTORY => Error::NotADirectory(message),
            code::IS_A_DIRECTORY => Error::IsADirectory(message),
            code::CORRUPT => Error::Corrupt(message),
            code::INVALID => Error::InvalidArgument(message),
            code::RESOURCE_EXHAUSTED => Error::ResourceExhausted(message),
            code::NOT_READY => Error::NotReady,
            code::UNAVAILABLE => Error::Unavailable(message),
            code::MALFORMED => Error::Malformed(message),
            _ => Error::Remote { code, message },
        }
    }

    /// Connection-level failures that may succeed on another attempt.
    pub fn is_retriable(&self) -> bool {
        matches!(
            self,
            Error::Unavailable(_) | Error::Timeout(_) | Error::NotReady
        )
    }

    /// Closest POSIX errno, used by the client facade.
    pub fn errno(&self) -> i32 {
        match self {
            Error::NotFound(_) => 2,        // ENOENT
            Error::AlreadyExists(_) => 17,  // EEXIST
            Error::NotADirectory(_) => 20,  // ENOTDIR
            Error::IsADirectory(_) => 21,   // EISDIR
            Error::BadDescriptor(_) => 9,   // EBADF
            Error::PathTooLong { .. } => 36, // ENAMETOOLONG
            Error::InvalidArgument(_) => 22, // EINVAL
            Error::ResourceExhausted(_) => 12, // ENOMEM
            Error::Timeout(_) => 110,       // ETIMEDOUT
            Error::Unavailable(_) | Error::NotReady => 107, // ENOTCONN
            Error::Io(e) => e.raw_os_error().unwrap_or(5),
            _ => 5, // EIO
        }
    }

    pub(crate) fn corrupt_partition(
        partition: &std::path::Path,
        entry: u32,
        reason: impl Into<String>,
    ) -> Error {
        Error::CorruptPartition {
            partition: partition.display().to_string(),
            entry,
            reason: reason.into(),
        }
    }
}
