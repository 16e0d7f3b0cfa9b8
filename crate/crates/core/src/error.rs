use std::path::PathBuf;

use crate::kb::StoreKind;
use crate::lexer::Dialect;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dialect mismatch: expected {expected}, found {found}{}", path_suffix(.path))]
    DialectMismatch {
        expected: Dialect,
        found: Dialect,
        path: Option<String>,
    },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("feature class {0} has no mapping row")]
    UnmappedClass(String),

    #[error("invalid taxonomy: {0}")]
    Taxonomy(String),

    #[error("invalid feature mapping: {0}")]
    Mapping(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("chunk {0} is missing")]
    MissingChunk(usize),

    #[error("chunk {0} appears more than once")]
    DuplicateChunk(usize),

    #[error("chunks belong to different scripts: {0} and {1}")]
    MixedScripts(String, String),

    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(String),

    #[error("embedder mismatch: index uses {expected}, got {found}")]
    EmbedderMismatch { expected: String, found: String },

    #[error("entry store {found:?} does not match index store {expected:?}")]
    StoreKindMismatch { expected: StoreKind, found: StoreKind },

    #[error("cannot build an index from zero entries")]
    EmptyIndex,

    #[error("k must be at least 1")]
    InvalidK,

    #[error("knowledge-base store missing: {}", join_stores(.0))]
    StoreMissing(Vec<StoreKind>),

    #[error("index format error: {0}")]
    IndexFormat(String),

    #[error("unbound placeholder {{{0}}}")]
    UnboundPlaceholder(String),

    #[error("binding {0} does not correspond to a template placeholder")]
    UnknownBinding(String),

    #[error("translator backend failed: {0}")]
    Backend(String),

    #[error("validator unavailable: {0}")]
    ValidatorUnavailable(String),

    #[error("no feature has a positive training count")]
    EmptyCounts,

    #[error("invalid GAP weights: {0}")]
    InvalidWeights(String),

    #[error("GAP_Feature is singular: denominator 2 - x = {denominator} (x = {x})")]
    Singularity { x: f64, denominator: f64 },

    #[error("{}: {source}", .path.display())]
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
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn path_suffix(path: &Option<String>) -> String {
    path.as_ref().map(|p| format!(" in {p}")).unwrap_or_default()
}

fn join_stores(stores: &[StoreKind]) -> String {
    stores
        .iter()
        .map(|s| s.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}
