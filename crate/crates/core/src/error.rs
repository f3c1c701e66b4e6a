use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("undefined distribution: {0}")]
    UndefinedDistribution(String),

    #[error("no count rows inside window {0}")]
    EmptyWindow(String),

    #[error("replay memory holds {have} transitions, {need} required")]
    InsufficientMemory { have: usize, need: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    MissingFile,
    Validation,
    Internal,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub fn parse(path: impl std::fmt::Display, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            msg: msg.into(),
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NotFound(_) => ErrorClass::MissingFile,
            Error::Io { .. } | Error::Internal(_) => ErrorClass::Internal,
            Error::Stage { source, .. } => source.class(),
            _ => ErrorClass::Validation,
        }
    }

    /// Short machine-parseable tag for the error family.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Argument(_) => "argument",
            Error::Shape(_) => "shape",
            Error::UndefinedDistribution(_) => "distribution",
            Error::EmptyWindow(_) => "empty-window",
            Error::InsufficientMemory { .. } => "memory",
            Error::Parse { .. } => "parse",
            Error::NotFound(_) => "not-found",
            Error::Io { .. } => "io",
            Error::Stage { source, .. } => source.tag(),
            Error::Internal(_) => "internal",
        }
    }
}
