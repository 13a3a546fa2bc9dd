use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("mesh functions live on different grids")]
    GridMismatch,

    #[error("node ({i}, {j}) shifted by ({p}, {q}) leaves the grid")]
    OutOfGrid { i: usize, j: usize, p: i32, q: i32 },

    #[error("poisson iteration stopped after {iterations} iterations with relative residual {residual:e}")]
    PoissonNotConverged { iterations: usize, residual: f64 },

    #[error("non-finite value in iterate {iteration}")]
    NonFinite { iteration: usize },

    #[error("measure: {0}")]
    Measure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
