use thiserror::Error;

/// Errors raised by the grid operators, the model, and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field length {len} does not match grid with {expected} cells")]
    LengthMismatch { len: usize, expected: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite value {value} in field `{field}` at cell ({i}, {j})")]
    NonFinite {
        field: &'static str,
        i: usize,
        j: usize,
        value: f64,
    },

    #[error("negative value {value} in `{field}` at cell ({i}, {j})")]
    Negative {
        field: &'static str,
        i: usize,
        j: usize,
        value: f64,
    },

    #[error("negative argument {0} outside the nonnegative solution regime")]
    NegativeArgument(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
