//! Error type shared across the library.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Panel construction or shape violation (duplicate dates, ragged rows, ...).
    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("insufficient intraday data: {got} log prices, need at least {need}")]
    InsufficientIntradayData { got: usize, need: usize },

    #[error("non-positive value {value} for node {node} on {date}")]
    NonPositiveEntry {
        node: String,
        date: String,
        value: f64,
    },

    #[error("zero previous close for node {node} on {date}")]
    ZeroClose { node: String, date: String },

    #[error("panels have no dates in common")]
    EmptyDateIntersection,

    #[error("node mismatch: {0}")]
    NodeMismatch(String),

    /// Configuration or argument violation detected before any numerics run.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("series {series} has zero standard deviation in the window")]
    ZeroStd { series: String },

    #[error("insufficient history: need row index >= {need}, got {t}")]
    InsufficientHistory { t: usize, need: usize },

    #[error("regression has {rows} rows but {cols} columns")]
    InsufficientRows { rows: usize, cols: usize },

    #[error("matrix not symmetric: max |A - A^T| = {max_dev}")]
    NotSymmetric { max_dev: f64 },

    #[error("coefficients violate the stationarity constraint: max node sum {margin} >= 1")]
    NonStationary { margin: f64 },

    /// Numerical failure during estimation or forecasting.
    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
