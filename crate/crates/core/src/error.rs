use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("non-finite state after pseudo-time step {step}")]
    Divergence { step: usize },

    #[error("ensemble blew up (max |x| = {max_abs:e})")]
    StateBlowup { max_abs: f64 },

    #[error("implicit midpoint iteration did not converge after {iterations} iterations (residual {residual:e})")]
    Integration {
        iterations: usize,
        residual: f64,
        iterate: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(context: &'static str, expected: impl ToString, actual: impl ToString) -> Error {
    Error::Dimension {
        context,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}

pub(crate) fn ensure_shape(
    context: &'static str,
    (rows, cols): (usize, usize),
    (want_rows, want_cols): (usize, usize),
) -> Result<()> {
    if rows != want_rows || cols != want_cols {
        return Err(dim_err(
            context,
            format!("{want_rows}x{want_cols}"),
            format!("{rows}x{cols}"),
        ));
    }
    Ok(())
}
