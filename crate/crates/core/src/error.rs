use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("invalid model specification: {0}")]
    Spec(String),

    #[error("cyclic endogenous-regressor graph: {0}")]
    Cycle(String),

    #[error("row {row}, column `{column}`: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("codebook error: {0}")]
    Codebook(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("singular matrix (condition number {condition:.3e}): {context}")]
    Singular { context: String, condition: f64 },

    #[error("effect request error: {0}")]
    Effect(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dimension(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            found,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
