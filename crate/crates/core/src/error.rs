use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge: achieved error {achieved:.3e}, requested {requested:.3e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("fields or operators live on different grids")]
    GridMismatch,

    #[error("invalid potential: {0}")]
    Potential(String),

    #[error("invalid multiplier: {0}")]
    Multiplier(String),

    #[error("grid too coarse: spacing {spacing} exceeds a quarter of the smallest bump support radius {support}")]
    GridTooCoarse { spacing: f64, support: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
