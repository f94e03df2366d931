use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("input has nonzero mean {mean:.3e} (field norm {norm:.3e})")]
    NonzeroMean { mean: f64, norm: f64 },

    #[error("eigen decomposition failed at k = {k}: {reason}")]
    Eigen { k: f64, reason: String },

    #[error("curve continuation lost track at k = {k} (overlap {overlap:.3})")]
    Continuation { k: f64, overlap: f64 },

    #[error("critical eigenvalues not separated at k = {k} (gap {gap:.3e})")]
    Collision { k: f64, gap: f64 },

    #[error("non-finite state at t = {t}: {what}")]
    BlowUp { t: f64, what: String },

    #[error("fixed-point iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
