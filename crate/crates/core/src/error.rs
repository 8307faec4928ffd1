use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate column id `{0}`")]
    DuplicateColumn(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("duplicate label `{0}` in vocabulary")]
    DuplicateLabel(String),

    #[error("vocabulary is empty")]
    EmptyVocabulary,

    #[error("no gold-labeled columns to sample seeds from")]
    EmptySeeds,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("schema error in `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("pattern error at offset {offset}: {message}")]
    Pattern { offset: usize, message: String },

    #[error("duplicate labeling function id `{0}`")]
    DuplicateLf(String),

    #[error("misaligned inputs: expected {expected} entries, got {actual}")]
    Misaligned { expected: usize, actual: usize },

    #[error("prompt template: placeholder `{{{0}}}` must appear exactly once in the user prompt")]
    Template(String),

    #[error("backend `{backend}` failed: {message}")]
    Backend { backend: String, message: String },

    #[error("no labeling functions could be parsed from any backend response")]
    NoLabelingFunctions,

    #[error("label model needs at least 2 labels, got {0}")]
    TooFewLabels(usize),

    #[error("no signal: the label matrix contains no votes")]
    NoSignal,

    #[error("cannot split {labels} labels into {k} groups")]
    PartitionSize { k: usize, labels: usize },

    #[error("hierarchy: {0}")]
    Hierarchy(String),

    #[error("embedding provider: {0}")]
    Embedding(String),

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }
}
