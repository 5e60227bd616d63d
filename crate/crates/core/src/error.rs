use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: `{key}` expects {expected}, got `{value}`")]
    TypeMismatch {
        key: String,
        line: usize,
        expected: &'static str,
        value: String,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("{}`{key}` {reason}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Bound {
        key: &'static str,
        reason: String,
        line: Option<usize>,
    },
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("non-finite {what} at cell {cell} (step {step}, phase {phase})")]
    NumericFault {
        step: u64,
        phase: &'static str,
        cell: usize,
        what: &'static str,
    },
    #[error("{path}: {source}{}", step.map(|s| format!(" (step {s})")).unwrap_or_default())]
    Io {
        path: PathBuf,
        step: Option<u64>,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error("{0}")]
    Encode(String),
    #[error("worker pool: {0}")]
    Threads(String),
}

impl SimError {
    pub fn io(path: impl Into<PathBuf>, step: Option<u64>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            step,
            source,
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
