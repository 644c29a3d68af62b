use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is singular or not positive definite")]
    Singular,

    #[error("mode probabilities degenerated (all likelihoods underflowed); reset to uniform")]
    DegenerateMode,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported format `{found}`, expected `{expected}`")]
    Format { expected: String, found: String },

    #[error("malformed {what}: {reason}")]
    Malformed { what: &'static str, reason: String },

    #[error("training diverged at epoch {epoch}: loss was non-finite for every batch")]
    Diverged { epoch: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
