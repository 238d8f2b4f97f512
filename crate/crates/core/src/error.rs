use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("grid alignment mismatch between {left} and {right}: {detail}")]
    Alignment {
        left: String,
        right: String,
        detail: String,
    },

    #[error("point {value} outside domain [{lower}, {upper}]")]
    Domain { value: f64, lower: f64, upper: f64 },

    #[error("unsupported operation: {0}")]
    Capability(String),

    #[error("singular system (condition estimate {condition:.3e}): {detail}")]
    SingularSystem { condition: f64, detail: String },

    #[error("{dropped} of {total} {what} dropped, above the {limit_pct}% limit")]
    TooManyDropped {
        what: &'static str,
        dropped: usize,
        total: usize,
        limit_pct: f64,
    },

    #[error("rank-deficient single-trial design; collinear or empty trials: {trials:?}")]
    RankDeficientTrials { trials: Vec<usize> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// True for failures of the numerical kind (singular systems, excessive
    /// replicate drops), as opposed to bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularSystem { .. } | Error::TooManyDropped { .. } | Error::RankDeficientTrials { .. }
        )
    }
}
