use thiserror::Error;

pub type Result<T> = std::result::Result<T, FmmError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FmmError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A factor `1 + tau * x` vanished or turned negative.
    #[error("singular denominator 1 + tau_{index} * x = {value:e}")]
    SingularDenominator { index: usize, value: f64 },

    /// A discount factor needs a fixing the state does not carry.
    #[error("incomplete rate state: rate {index} is missing")]
    IncompleteState { index: usize },

    #[error("correlation matrix is not positive semi-definite (pivot {pivot} = {value:e})")]
    Factorization { pivot: usize, value: f64 },

    #[error("singular tridiagonal system: zero pivot at row {row}")]
    SingularSystem { row: usize },

    /// A directional solve hit a singular slice; `slice` is the multi-index
    /// of the line with the solved direction set to zero.
    #[error("singular directional system along axis {axis} at slice {slice:?}")]
    SingularSlice { axis: usize, slice: Vec<usize> },

    #[error("no implied volatility: {0}")]
    NoSolution(String),

    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },
}

impl FmmError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        FmmError::Domain(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        FmmError::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
