use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the workflow and its subsystems.
///
/// Agent-facing failures (jail refusals, apply mismatches, bad tool arguments)
/// are not errors: they are returned to the agent as tool result text.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("sandbox error: {0}")]
    Sandbox(String),

    #[error("patch parse error at line {line}: {message}")]
    PatchParse { line: usize, message: String },

    #[error("patch does not apply:\n{0}")]
    PatchApply(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("provider failure: {0}")]
    Provider(String),

    #[error("debugger error: {0}")]
    Debugger(String),

    #[error("generate tests failed: {0}")]
    GenerateTests(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attaches a path to `std::io::Result`s.
pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
