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

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("labels file {0} contains no labels")]
    EmptyLabels(PathBuf),

    #[error("duplicate label '{label}' (lines {first} and {second})")]
    DuplicateLabel {
        label: String,
        first: usize,
        second: usize,
    },

    #[error("unknown label '{0}'")]
    UnknownLabel(String),

    #[error("unknown node id {node} (dendrogram has {count} nodes)")]
    UnknownNode { node: usize, count: usize },

    #[error("concept name is empty")]
    EmptyName,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("taxonomy is missing labels: {}", .0.join(", "))]
    MissingTaxonomyLabels(Vec<String>),

    #[error("taxonomy root mismatch: chain for '{label}' ends with '{found}', expected '{expected}'")]
    RootMismatch {
        label: String,
        found: String,
        expected: String,
    },

    #[error("reference chain empty for label '{0}'")]
    EmptyReference(String),

    #[error("label '{0}' has no reference annotation")]
    MissingReference(String),

    #[error("cannot cluster an empty label set")]
    EmptyGraph,

    #[error("overrides were saved for dendrogram {found}, loaded dendrogram is {expected}")]
    HashMismatch { expected: String, found: String },

    #[error("missing upstream artifact {0}")]
    MissingArtifact(PathBuf),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
