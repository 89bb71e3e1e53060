use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown log level `{0}`")]
    UnknownLevel(String),
    #[error("`{0}` is not a <component>.<level> file name")]
    BadFileName(String),
    #[error("{file_name}: expected line index {expected}, found {found}")]
    LineOrder { file_name: String, expected: usize, found: usize },
    #[error("{file_name}: line {line_index} has an empty message")]
    EmptyMessage { file_name: String, line_index: usize },
    #[error("duplicate file `{0}` in bundle")]
    DuplicateFile(String),
    #[error("UnparseableLine notes must name a file")]
    NoteWithoutFile,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read bundle directory {path}: {source}")]
    RootDirUnreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid ingestion config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("invalid prompt template: {0}")]
    InvalidTemplate(String),
    #[error("token budget {budget} is too small; at least {required} tokens are needed")]
    BudgetTooSmall { budget: usize, required: usize },
    #[error("duplicate component `{0}` in context")]
    DuplicateComponent(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("backend returned an empty response")]
    ResponseEmpty,
    #[error("invalid LLM parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown finding `{0}`")]
    UnknownFinding(String),
    #[error("store I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store record in {path}: {detail}")]
    Corrupt { path: PathBuf, detail: String },
}

impl StoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        StoreError::Io { path: path.into(), source }
    }
}

/// Failure of one end-to-end diagnosis run.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Store(#[from] StoreError),
}
