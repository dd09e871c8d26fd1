use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate document id `{0}`")]
    DuplicateDocId(String),

    #[error("index is empty")]
    EmptyIndex,

    #[error("unknown document id `{0}`")]
    UnknownDoc(String),

    #[error("query `{0}` has no terms after tokenization")]
    EmptyQuery(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: file is empty")]
    EmptyFile { path: PathBuf },

    #[error("query `{0}` retrieved no documents")]
    EmptyRetrieval(String),

    #[error("no query term has an embedding")]
    NoEmbeddedTerms,

    #[error("vector dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),

    #[error("term `{term}` does not occur in document `{doc}`")]
    TermNotInDoc { term: String, doc: String },

    #[error("black box `{0}` is strongly agnostic: scores are unavailable")]
    StrongAgnostic(String),

    #[error("exact solver refuses {0} candidates (limit {1}); use the greedy solver")]
    TooManyCandidates(usize, usize),

    #[error("pair ({better}, {worse}) is discordant: the explanation ranker prefers `{worse}`")]
    DiscordantPair { better: String, worse: String },

    #[error("document `{0}` is not in the explained pool")]
    NotInPool(String),

    #[error("need at least 2 items, got {0}")]
    TooFewItems(usize),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether this error stems from a bad configuration rather than bad data.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::StrongAgnostic(_) | Error::TooManyCandidates(..)
        )
    }
}
