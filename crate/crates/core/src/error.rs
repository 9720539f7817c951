use thiserror::Error;

/// Crate-wide error type.
///
/// `Contract` covers caller mistakes (bad arguments, invalid configs, misuse of
/// an API); everything else describes problems with input data or I/O. The CLI
/// maps the former to exit code 2 and the latter to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("PLY parse error ({location}): {message}")]
    PlyParse { location: String, message: String },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("ingest error at row {row}, column {column}: {message}")]
    Ingest {
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// True for errors that indicate caller/config mistakes rather than bad data.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Contract(_) | Error::Config(_))
    }
}
