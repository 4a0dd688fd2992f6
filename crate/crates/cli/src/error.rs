use std::path::PathBuf;

/// Process exit codes.
pub mod exit {
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DIVERGENCE: i32 = 3;
    pub const MISSING_ARTIFACT: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing artifact {}: run `gravcomp {}` first", path.display(), producer)]
    MissingArtifact {
        path: PathBuf,
        producer: &'static str,
    },
    #[error(transparent)]
    Core(#[from] gravcomp::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::MissingArtifact { .. } => exit::MISSING_ARTIFACT,
            CliError::Core(gravcomp::Error::Divergence { .. }) => exit::DIVERGENCE,
            CliError::Core(
                gravcomp::Error::InvalidParameter(_)
                | gravcomp::Error::DimensionMismatch { .. }
                | gravcomp::Error::GridTooLarge { .. },
            ) => exit::CONFIG,
            CliError::Core(_) => exit::FAILURE,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
