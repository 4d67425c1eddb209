use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown category token `{0}`")]
    UnknownCategory(String),

    #[error("unknown gender token `{0}`")]
    UnknownGender(String),

    #[error("duplicate example_id `{0}`")]
    DuplicateExample(String),

    #[error("doc_group missing gender variant: `{group}` has {present:?}")]
    IncompleteDocGroup { group: String, present: Vec<String> },

    #[error("doc_group `{group}` is shared by several queries or relevance labels")]
    InconsistentDocGroup { group: String },

    #[error(
        "query `{query}` must pair exactly one relevant and one non-relevant doc_group: {detail}"
    )]
    BadQueryPairing { query: String, detail: String },

    #[error("invalid synthetic spec: {0}")]
    InvalidSynthSpec(String),

    #[error("embedding file: {0}")]
    EmbeddingFormat(String),

    #[error("embedding file truncated at record {index}")]
    Truncated { index: u64 },

    #[error("missing embedding for example `{0}`")]
    MissingEmbedding(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("pair index {index} out of range for batch of {len}")]
    PairIndexOutOfRange { index: usize, len: usize },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("category `{0}` has no examples")]
    EmptyCategory(String),

    #[error("weights file: {0}")]
    WeightsFormat(String),

    #[error("report grid mismatch: {0}")]
    GridMismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed input or configuration rather than
    /// a failure while running.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::NonFinite(_))
    }
}
