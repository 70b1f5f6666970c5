use thiserror::Error;

/// Errors raised by the simulation library.
///
/// Variants fall into two families: configuration problems (bad parameters,
/// incompatible inputs) and numerical failures (quadrature or search that did
/// not converge). [`Error::is_numeric`] tells them apart.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("kernel singularity at x = {x}")]
    Singularity { x: f64 },

    #[error("quadrature did not converge on [{lower}, {upper}]: estimate {estimate}, error {error}")]
    Quadrature {
        lower: f64,
        upper: f64,
        estimate: f64,
        error: f64,
    },

    #[error("tail window search did not converge after {doublings} doublings (function likely not in L^{alpha})")]
    TailWindow { doublings: usize, alpha: f64 },

    #[error("lattice window holds {cells} cells, above the limit of {limit}")]
    WindowTooLarge { cells: u128, limit: u128 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Quadrature { .. } | Error::TailWindow { .. } | Error::WindowTooLarge { .. }
        )
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
