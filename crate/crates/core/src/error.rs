use std::path::PathBuf;

/// Errors produced by the gravity-compensation toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("training diverged at step {step}: non-finite {what}")]
    Divergence { step: usize, what: &'static str },
    #[error("non-finite simulation state at step {step} (t = {time:.4} s, joint {joint})")]
    NonFiniteState { step: usize, time: f64, joint: usize },
    #[error("grid of {size} states exceeds the cap of {cap}")]
    GridTooLarge { size: u128, cap: usize },
    #[error("joint {joint} has no admissible samples (all |target| below threshold)")]
    NoAdmissibleSamples { joint: usize },
    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, got })
    }
}
