use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: bad header, expected `{expected}`")]
    Header { path: PathBuf, expected: String },

    #[error("{path}: not a model artifact ({reason})")]
    Artifact { path: PathBuf, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty gazetteer")]
    EmptyGazetteer,

    #[error("degenerate normalization: {0}")]
    DegenerateNormalization(String),

    #[error("no lexicon terms in corpus")]
    NoLexiconTerms,

    #[error("empty vocabulary after pruning")]
    EmptyVocabulary,

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown neighborhood `{0}`")]
    UnknownNeighborhood(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by the caller's files, flags or data rather than by a
    /// defect in the pipeline itself.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Serialization(_))
    }
}
