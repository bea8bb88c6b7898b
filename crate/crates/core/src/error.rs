use std::path::PathBuf;

use thiserror::Error;

use crate::topology::NetworkSpec;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid connection: {0}")]
    InvalidConnection(String),

    #[error("time index {t} out of range 1..={steps}")]
    TimeOutOfRange { t: usize, steps: usize },

    #[error("no step has been taken yet (t = 0)")]
    NoStepTaken,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("trace is {found} mode, engine needs {needed} mode")]
    WrongTraceMode {
        needed: &'static str,
        found: &'static str,
    },

    #[error("instance too large for the unrolled oracle: {0}")]
    InstanceTooLarge(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("malformed IDX file {path}: {msg}")]
    Idx { path: PathBuf, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}, iteration {iteration}: non-finite loss")]
    Diverged {
        epoch: usize,
        iteration: usize,
        last_good: Box<NetworkSpec>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(op: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch { op, expected, got }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
