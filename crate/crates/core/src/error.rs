use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema violation at row {row}, column `{column}`: {reason}")]
    SchemaViolation {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("duplicate feature name `{0}` in schema")]
    DuplicateFeature(String),

    #[error("school `{school}` mapped to countries `{first}` and `{second}`")]
    SchoolInTwoCountries {
        school: String,
        first: String,
        second: String,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("only one class present in labels")]
    SingleClass,

    #[error("class {class} has {count} members, fewer than k = {k}")]
    TooFewInClass { class: u8, count: usize, k: usize },

    #[error("complete separation detected on predictor `{0}`")]
    Separation(String),

    #[error("singular system while solving {0}")]
    Singular(&'static str),

    #[error("row width {got} does not match model width {expected}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("feature count {0} too large for subset enumeration (max 15)")]
    TooManyFeatures(usize),

    #[error("config: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("plot data does not match kind `{0}`")]
    PlotSchema(&'static str),

    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

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
}
