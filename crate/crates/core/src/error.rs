use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty table")]
    EmptyTable,

    #[error("{what} must be at least 1")]
    ZeroLength { what: &'static str },

    #[error("length mismatch: table has {table} rows, settings stream has {settings} pairs")]
    LengthMismatch { table: usize, settings: usize },

    /// A setting cell with no observations has no correlation.
    #[error("undefined correlation: setting cell ({x},{y}) is empty")]
    UndefinedCorrelation { x: u8, y: u8 },

    #[error("exhaustive enumeration of {assignments} assignments exceeds cap {cap}")]
    EnumerationCap { assignments: u128, cap: u64 },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid behavior: {0}")]
    InvalidBehavior(String),

    #[error("parse error at line {line}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        line: usize,
        column: Option<usize>,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column: None,
            message: message.into(),
        }
    }
}
