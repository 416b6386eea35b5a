use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "test function supplies derivatives up to order {available}, order {required} is required"
    )]
    InsufficientOrder { required: usize, available: usize },

    #[error("evaluation point w = {w} lies outside the accuracy envelope |w| <= {envelope}")]
    OutsideEnvelope { w: f64, envelope: f64 },

    #[error("support cap exceeded: projected {projected} atoms, cap is {cap}")]
    SupportCap { projected: usize, cap: usize },

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
