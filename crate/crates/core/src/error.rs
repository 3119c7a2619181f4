use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("training failed at timestep {timestep}: {source}")]
    Training {
        timestep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing upstream artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("artifact {} was produced by a different configuration (expected hash {expected}, found {found})", .path.display())]
    HashMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 3,
            Error::Training { source, .. } => source.exit_code(),
            Error::MissingArtifact(_) => 4,
            Error::Io(_) | Error::Json(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn at_timestep(self, timestep: usize) -> Error {
        match self {
            e @ Error::Training { .. } => e,
            e => Error::Training {
                timestep,
                source: Box::new(e),
            },
        }
    }
}

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("{what}: non-finite value at index {i}")));
    }
    Ok(())
}
