use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("eigensolver did not converge")]
    EigenSolve,

    #[error("integration diverged at t = {time}: {reason}")]
    Divergence { time: f64, reason: String },

    #[error("no steady state before t_max = {t_max} (final residual {residual:e})")]
    NotConverged { t_max: f64, residual: f64 },

    #[error("steady states from distinct initial conditions differ by {difference:e}")]
    NonUnique { difference: f64 },

    #[error("polylogarithm pole: Li_{alpha}(1) diverges for alpha <= 1")]
    PolylogPole { alpha: f64 },

    #[error("series did not converge: {0}")]
    SeriesNonConvergence(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("no crossing in window")]
    NoCrossing,

    #[error("value {value} lies outside the sampled range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed data in {path}: {reason}")]
    Data { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
