use std::path::PathBuf;

/// Errors produced by the evaluation library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("invalid rating scale: {0}")]
    InvalidScale(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at epoch {epoch} ({model}): non-finite parameters")]
    Diverged { model: &'static str, epoch: usize },

    #[error("t-test needs at least 2 samples per side, got {n_a} and {n_b}")]
    InsufficientSamples { n_a: usize, n_b: usize },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("reports cover different neighborhood universes: {0}")]
    MismatchedUniverse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
