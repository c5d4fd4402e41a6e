use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid entity id {0:?}: must be non-empty and contain no whitespace")]
    InvalidEntityId(String),

    #[error("invalid entity type {0:?}: must be non-empty and contain no whitespace")]
    InvalidEntityType(String),

    #[error("unknown entity {0}")]
    UnknownEntity(String),

    #[error("entity {id} has conflicting types {first} and {second}")]
    TypeConflict {
        id: String,
        first: String,
        second: String,
    },

    #[error("duplicate entity {0}")]
    DuplicateEntity(String),

    #[error("duplicate edge {0} -- {1}")]
    DuplicateEdge(String, String),

    #[error("self-loop on {0}")]
    SelfLoop(String),

    #[error("edge weight must be positive and finite, got {0}")]
    InvalidWeight(f64),

    /// Error located in a line-oriented text input (1-based line number).
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed input: {0}")]
    Malformed(String),

    /// Error located in an event stream (0-based record index).
    #[error("record {index}: {message}")]
    Record { index: usize, message: String },

    #[error("adjacency views are not over the same entity index space")]
    IndexMismatch,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric (max deviation {0:e})")]
    NotSymmetric(f64),

    #[error("design matrix is rank deficient; use a positive ridge")]
    RankDeficient,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("no meta-paths of length 2..={0} in the source graph; raise max_path_len")]
    NoMetaPaths(usize),

    #[error("no overlap between domains")]
    NoOverlap,

    #[error("objective diverged ({0:e}); reduce the step size")]
    Diverged(f64),

    #[error("cannot realize dynamic factor {requested}: {reason}")]
    Unrealizable { requested: f64, reason: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

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
    pub(crate) fn at_line(line: usize, err: Error) -> Self {
        Error::AtLine {
            line,
            source: Box::new(err),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attaches a pipeline stage label to an error.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
