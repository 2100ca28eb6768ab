use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// An enumeration or simulation would exceed its configured budget.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// The distribution gives zero mass to some colours; restrict the
    /// automaton to the support before building the pivot tree.
    #[error("colours {colours:?} have zero mass; restrict to the support first")]
    ShrinkRequired { colours: Vec<usize> },

    #[error("not a fixed point: residual {residual:e} exceeds {limit:e}")]
    NotFixedPoint { residual: f64, limit: f64 },

    #[error("bracket error: {0}")]
    Bracket(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
