use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed dataset record; names the offending field.
    #[error("parse error in field `{field}`: {message}")]
    Parse { field: String, message: String },

    /// Structurally invalid question (zero blanks, duplicate options, ...).
    #[error("structural error: {0}")]
    Structural(String),

    /// Option segment count does not match the stem's blank count.
    #[error("fill error: option has {segments} segment(s) but stem has {blanks} blank(s)")]
    FillMismatch { segments: usize, blanks: usize },

    #[error("vocab error: {0}")]
    Vocab(String),

    /// Tensor shape incompatibility; carries both shapes.
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// NaN/Inf produced by a forward op or a non-finite loss.
    #[error("numeric error in {op}: non-finite value")]
    NonFinite { op: &'static str },

    #[error("config error: {0}")]
    Config(String),

    #[error("weight file error: {0}")]
    WeightFile(String),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(field: &str, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
