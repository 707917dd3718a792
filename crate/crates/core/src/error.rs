use std::path::PathBuf;

use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report, grouped by the category the CLI maps to an exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("invalid argument to {op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },

    #[error("build error: {0}")]
    Build(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error in {path}: {reason}")]
    Data { path: PathBuf, reason: String },

    #[error("truncated record {record} in {path}: {trailing} trailing bytes (record size {record_size})")]
    Truncated {
        path: PathBuf,
        record: usize,
        trailing: usize,
        record_size: usize,
    },

    #[error("model file format error: {0}")]
    Format(String),

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(op: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse category used for diagnostics and process exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::ShapeMismatch { .. } | Error::InvalidArgument { .. } => ErrorCategory::Numeric,
            Error::Build(_) | Error::Config(_) => ErrorCategory::Build,
            Error::Data { .. } | Error::Truncated { .. } => ErrorCategory::Data,
            Error::Format(_) | Error::Version { .. } => ErrorCategory::Data,
            Error::Numeric(_) => ErrorCategory::Numeric,
            Error::Io { .. } => ErrorCategory::Io,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Build,
    Data,
    Numeric,
    Io,
}

impl ErrorCategory {
    pub fn name(self) -> &'static str {
        match self {
            ErrorCategory::Build => "build",
            ErrorCategory::Data => "data",
            ErrorCategory::Numeric => "numeric",
            ErrorCategory::Io => "io",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Build => 3,
            ErrorCategory::Data => 4,
            ErrorCategory::Numeric => 5,
            ErrorCategory::Io => 6,
        }
    }
}
