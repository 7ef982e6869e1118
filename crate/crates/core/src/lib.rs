//! Network time-series models for realised-volatility forecasting.
//!
//! The library implements the GNAR-HARX model family: heterogeneous
//! autoregressive (HAR) lag structure, network-aggregated spillover terms
//! over r-stage neighbourhoods, and node-specific exogenous regressors.
//! Around the models sit the pieces needed to run them end to end: panel
//! construction from raw series, graphical-lasso network estimation,
//! rolling-window backtesting with a Jensen-corrected back-transform,
//! QLIKE/MSE evaluation, and process simulation for testing.

pub mod error;
pub mod eval;
pub mod forecast;
pub mod glasso;
pub mod model;
pub mod network;
pub mod panel;
pub mod sim;

pub use error::{Error, Result};
