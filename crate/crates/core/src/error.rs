use std::path::PathBuf;

use thiserror::Error;

use crate::types::SampleViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} = {value} is out of range ({expected})")]
    Range {
        name: &'static str,
        value: String,
        expected: String,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("class {label} has no accumulated samples")]
    UnseenClass { label: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("matrix is not positive definite: pivot {index} = {pivot:e}")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("metric {metric} is undefined for task {task}")]
    UndefinedMetric { metric: &'static str, task: usize },

    #[error("invalid sample: {0}")]
    Sample(#[from] SampleViolation),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{path}: format error: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: unsupported version {version}")]
    UnsupportedVersion { path: PathBuf, version: u32 },

    #[error("{path}: corrupt at byte offset {offset}: {reason}")]
    Corruption {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Broad error classes used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Numeric,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Usage => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numeric => 4,
            ErrorCategory::Io => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Usage => "usage",
            ErrorCategory::Data => "data",
            ErrorCategory::Numeric => "numeric",
            ErrorCategory::Io => "io",
        }
    }
}

impl Error {
    pub(crate) fn range(
        name: &'static str,
        value: impl ToString,
        expected: impl ToString,
    ) -> Self {
        Error::Range {
            name,
            value: value.to_string(),
            expected: expected.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Usage,
            Error::Numeric(_)
            | Error::NotPositiveDefinite { .. }
            | Error::UndefinedMetric { .. } => ErrorCategory::Numeric,
            Error::Io { .. } => ErrorCategory::Io,
            Error::Range { .. }
            | Error::Contract(_)
            | Error::State(_)
            | Error::UnseenClass { .. }
            | Error::Sample(_)
            | Error::Shape(_)
            | Error::Format { .. }
            | Error::UnsupportedVersion { .. }
            | Error::Corruption { .. }
            | Error::Json { .. } => ErrorCategory::Data,
        }
    }
}
