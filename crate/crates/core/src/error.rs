use thiserror::Error;

/// Errors produced by grid construction, projection and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("operands live on different grids")]
    GridMismatch,

    #[error("point {point} outside grid bounds [{lo}, {hi}]")]
    OutOfBounds { point: f64, lo: f64, hi: f64 },

    #[error("kernel matrix numerically singular (condition estimate {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error(
        "projection did not converge after {iterations} iterations \
         (worst constraint residual {residual:.3e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("operation not supported for this process model: {0}")]
    Unsupported(String),

    #[error("scenario error at `{path}`: {message}")]
    Scenario { path: String, message: String },

    #[error("certificate failure: {0}")]
    Certificate(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn scenario(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
