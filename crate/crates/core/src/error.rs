use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AmdetError>;

#[derive(Debug, Error)]
pub enum AmdetError {
    #[error("invalid argument `{field}`: {reason}")]
    InvalidArgument { field: String, reason: String },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("band {name} [{lo_hz}, {hi_hz}) Hz lies above the Nyquist frequency {nyquist_hz} Hz")]
    BandAboveNyquist {
        name: String,
        lo_hz: f64,
        hi_hz: f64,
        nyquist_hz: f64,
    },

    #[error("trial {trial} spans {len} samples, shorter than one {needed}-sample window")]
    TrialTooShort {
        trial: usize,
        len: usize,
        needed: usize,
    },

    #[error("{format}: unsupported version {found} (expected {expected})")]
    Version {
        format: &'static str,
        found: u64,
        expected: u64,
    },

    #[error("{format}: payload length mismatch: expected {expected} bytes, found {actual}")]
    PayloadLength {
        format: &'static str,
        expected: u64,
        actual: u64,
    },

    #[error("{format}: invalid manifest field `{field}`: {reason}")]
    Manifest {
        format: &'static str,
        field: String,
        reason: String,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("training diverged in fold {fold} at epoch {epoch}: loss = {loss}")]
    Diverged { fold: usize, epoch: usize, loss: f64 },

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

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

impl AmdetError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        AmdetError::InvalidArgument {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn shape(
        context: impl Into<String>,
        expected: impl std::fmt::Debug,
        actual: impl std::fmt::Debug,
    ) -> Self {
        AmdetError::Shape {
            context: context.into(),
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }

    pub fn non_finite(context: impl Into<String>) -> Self {
        AmdetError::NonFinite {
            context: context.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AmdetError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        AmdetError::Json {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            AmdetError::InvalidArgument { .. } | AmdetError::Shape { .. } => ErrorKind::Usage,
            AmdetError::NonFinite { .. } | AmdetError::Diverged { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        }
    }
}
