//! Rolling-window backtesting: re-estimate the network and the model on a
//! trailing window, produce one-step-ahead forecasts for the next block of
//! days, and map log-space predictions back to variance levels with the
//! Jensen correction.
//!
//! Within each refit window the response and every regressor are
//! standardised per node over the rows that enter the regression, and the
//! model is fit without an intercept on the standardised values. That is
//! exactly equivalent to fitting the raw-space regression with a per-node
//! intercept, so a noise-free process is recovered without bias. Forecasts
//! destandardise with the same window statistics, which keeps every
//! forecast a function of data dated strictly before the forecast date.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glasso;
use crate::model::{
    column_layout, fit_ols, ColumnDef, DesignMatrix, FittedModel, ModelSpec, Standardisation,
    TermEvaluator,
};
use crate::network::{fully_connected, Network};
use crate::panel::TimeSeriesPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkMode {
    FullyConnected,
    GraphicalLasso,
    /// No edges at all: every network term vanishes and the model reduces
    /// to independent HAR(X) dynamics, which is how the univariate
    /// benchmarks are run.
    Empty,
}

/// Rolling backtest configuration. Window lengths are in trading days:
/// four years of initial history, three-year refit windows, monthly
/// (22-day) refit blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingConfig {
    pub initial_window: usize,
    pub refit_window: usize,
    pub block: usize,
    pub network_mode: NetworkMode,
    /// Fixed graphical-lasso penalty; when unset it is selected once by
    /// cross-validation on the initial window and then held fixed.
    pub glasso_rho: Option<f64>,
}

impl Default for RollingConfig {
    fn default() -> Self {
        Self {
            initial_window: 1008,
            refit_window: 756,
            block: 22,
            network_mode: NetworkMode::FullyConnected,
            glasso_rho: None,
        }
    }
}

impl RollingConfig {
    pub fn validate(&self, max_exog_lag: usize) -> Result<()> {
        if self.block == 0 {
            return Err(Error::InvalidInput("block must be >= 1".into()));
        }
        if self.refit_window > self.initial_window {
            return Err(Error::InvalidInput(format!(
                "refit_window {} exceeds initial_window {}",
                self.refit_window, self.initial_window
            )));
        }
        if self.refit_window <= 22 + max_exog_lag {
            return Err(Error::InvalidInput(format!(
                "refit_window {} too short for the 22-day lag structure plus exogenous lag {}",
                self.refit_window, max_exog_lag
            )));
        }
        if let Some(rho) = self.glasso_rho {
            if rho < 0.0 {
                return Err(Error::InvalidInput("glasso_rho must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// Standardise a series with its window mean and (n-1) standard deviation.
pub fn standardise_window(series: &[f64], label: &str) -> Result<(Vec<f64>, f64, f64)> {
    if series.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "series {label} has fewer than two observations"
        )));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let ss: f64 = series.iter().map(|v| (v - mean).powi(2)).sum();
    let std = (ss / (n - 1.0)).sqrt();
    if std == 0.0 {
        return Err(Error::ZeroStd {
            series: label.to_string(),
        });
    }
    Ok((series.iter().map(|v| (v - mean) / std).collect(), mean, std))
}

/// Unbiased level forecast under Gaussian log-space errors:
/// `exp(y_hat + sigma2 / 2)`.
pub fn jensen_backtransform(y_hat_log: f64, sigma2_log: f64) -> f64 {
    (y_hat_log + 0.5 * sigma2_log).exp()
}

/// Coefficients estimated at one refit.
#[derive(Debug, Clone)]
pub struct RefitRecord {
    /// First out-of-sample date the refit model forecasts.
    pub refit_date: String,
    /// `(key, value)` pairs in canonical column order.
    pub coefficients: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct BacktestResult {
    /// Level forecasts for every out-of-sample date.
    pub forecasts: TimeSeriesPanel,
    /// Realised variance over the same dates.
    pub actuals: TimeSeriesPanel,
    /// Log-space point forecasts (before the Jensen correction).
    pub log_forecasts: TimeSeriesPanel,
    pub coefficient_trajectory: Vec<RefitRecord>,
    pub network_trajectory: Vec<(String, Network)>,
    /// Standardised-space residual variance per refit, per node.
    pub residual_var_trajectory: Vec<(String, Vec<f64>)>,
    /// Penalty actually used for graphical-lasso refits.
    pub glasso_rho: Option<f64>,
}

const GLASSO_TOL: f64 = 1e-5;
const GLASSO_MAX_ITER: usize = 200;
const GLASSO_ZERO_TOL: f64 = 1e-8;

struct BlockOutput {
    refit_date: String,
    network: Network,
    coefficients: Vec<(String, f64)>,
    resid_var: Vec<f64>,
    /// (row offset into the out-of-sample panel, per-node (rv_hat, log_hat))
    rows: Vec<(usize, Vec<(f64, f64)>)>,
}

/// Run the rolling backtest. The first refit origin sits right after the
/// initial window; each refit trains on the trailing `refit_window` rows,
/// forecasts the next `block` dates one step ahead with frozen
/// coefficients, and the window then advances by `block`. The final
/// partial block is forecast too.
pub fn run_backtest(
    log_rv: &TimeSeriesPanel,
    exog_panels: &BTreeMap<String, TimeSeriesPanel>,
    returns: Option<&TimeSeriesPanel>,
    spec: &ModelSpec,
    cfg: &RollingConfig,
) -> Result<BacktestResult> {
    spec.validate()?;
    cfg.validate(spec.max_exog_lag())?;
    for e in &spec.exog {
        if e.lags.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "exogenous variable {} uses lag 0, which would feed same-day data into a one-step forecast",
                e.name
            )));
        }
        let panel = exog_panels
            .get(&e.name)
            .ok_or_else(|| Error::InvalidInput(format!("missing exogenous panel {}", e.name)))?;
        if !panel.same_shape(log_rv) {
            return Err(Error::NodeMismatch(format!(
                "exogenous panel {} is not aligned with the response",
                e.name
            )));
        }
    }
    let t_len = log_rv.n_rows();
    let n = log_rv.n_nodes();
    if t_len <= cfg.initial_window {
        return Err(Error::InvalidInput(format!(
            "panel has {} rows, need more than the initial window of {}",
            t_len, cfg.initial_window
        )));
    }

    let rho = match cfg.network_mode {
        NetworkMode::FullyConnected | NetworkMode::Empty => None,
        NetworkMode::GraphicalLasso => {
            let returns = returns.ok_or_else(|| {
                Error::InvalidInput("graphical-lasso mode needs a returns panel".into())
            })?;
            if !returns.same_shape(log_rv) {
                return Err(Error::NodeMismatch(
                    "returns panel is not aligned with the response".into(),
                ));
            }
            match cfg.glasso_rho {
                Some(rho) => Some(rho),
                None => Some(glasso::select_rho(
                    &returns.slice_rows(0, cfg.initial_window),
                    10,
                    None,
                )?),
            }
        }
    };

    let columns = column_layout(spec, n);
    let origins: Vec<usize> = (cfg.initial_window..t_len).step_by(cfg.block).collect();
    let blocks: Vec<BlockOutput> = origins
        .par_iter()
        .map(|&origin| {
            refit_block(
                log_rv, exog_panels, returns, spec, cfg, &columns, rho, origin, t_len, n,
            )
            .map_err(|e| Error::Estimation(format!(
                "refit at {}: {e}",
                log_rv.dates()[origin]
            )))
        })
        .collect::<Result<Vec<_>>>()?;

    let out_dates: Vec<String> = log_rv.dates()[cfg.initial_window..].to_vec();
    let out_len = out_dates.len();
    let mut rv_hat = DMatrix::zeros(out_len, n);
    let mut log_hat = DMatrix::zeros(out_len, n);
    let mut actual = DMatrix::zeros(out_len, n);
    for (row, t) in (cfg.initial_window..t_len).enumerate() {
        for i in 0..n {
            actual[(row, i)] = log_rv.value(t, i).exp();
        }
    }
    let mut coefficient_trajectory = Vec::with_capacity(blocks.len());
    let mut network_trajectory = Vec::with_capacity(blocks.len());
    let mut residual_var_trajectory = Vec::with_capacity(blocks.len());
    for block in blocks {
        for (row, values) in &block.rows {
            for (i, &(rv, lg)) in values.iter().enumerate() {
                rv_hat[(*row, i)] = rv;
                log_hat[(*row, i)] = lg;
            }
        }
        coefficient_trajectory.push(RefitRecord {
            refit_date: block.refit_date.clone(),
            coefficients: block.coefficients,
        });
        network_trajectory.push((block.refit_date.clone(), block.network));
        residual_var_trajectory.push((block.refit_date, block.resid_var));
    }

    let node_ids = log_rv.node_ids().to_vec();
    Ok(BacktestResult {
        forecasts: TimeSeriesPanel::new(node_ids.clone(), out_dates.clone(), rv_hat)?,
        actuals: TimeSeriesPanel::new(node_ids.clone(), out_dates.clone(), actual)?,
        log_forecasts: TimeSeriesPanel::new(node_ids, out_dates, log_hat)?,
        coefficient_trajectory,
        network_trajectory,
        residual_var_trajectory,
        glasso_rho: rho,
    })
}

#[allow(clippy::too_many_arguments)]
fn refit_block(
    log_rv: &TimeSeriesPanel,
    exog_panels: &BTreeMap<String, TimeSeriesPanel>,
    returns: Option<&TimeSeriesPanel>,
    cfg_spec: &ModelSpec,
    cfg: &RollingConfig,
    columns: &[ColumnDef],
    rho: Option<f64>,
    origin: usize,
    t_len: usize,
    n: usize,
) -> Result<BlockOutput> {
    let train_start = origin - cfg.refit_window;
    let network = match cfg.network_mode {
        NetworkMode::FullyConnected => fully_connected(n)?,
        NetworkMode::Empty => Network::empty(n)?,
        NetworkMode::GraphicalLasso => {
            let returns = returns.expect("validated in run_backtest");
            let s = glasso::standardised_covariance(returns, train_start, origin)?;
            let fit = glasso::glasso_fit(&s, rho.expect("set in GL mode"), GLASSO_TOL, GLASSO_MAX_ITER)?;
            glasso::to_network(&fit, GLASSO_ZERO_TOL)?
        }
    };

    let eval = TermEvaluator::new(log_rv, exog_panels, &network, cfg_spec)?;
    let t0 = train_start + cfg_spec.min_t();
    let target_times: Vec<usize> = (t0..origin).collect();
    if target_times.is_empty() {
        return Err(Error::InsufficientRows {
            rows: 0,
            cols: columns.len(),
        });
    }

    // per-column, per-node standardisation over the rows that enter the
    // regression; an identically-zero column (empty neighbourhood stage)
    // keeps identity stats and a zero coefficient via the minimum-norm fit
    let mut col_stats = vec![vec![(0.0, 1.0); n]; columns.len()];
    for (c, col) in columns.iter().enumerate() {
        for i in 0..n {
            if let Some(owner) = col.node {
                if owner != i {
                    continue;
                }
            }
            let values: Vec<f64> = target_times
                .iter()
                .map(|&t| eval.value(col.term, i, t))
                .collect();
            if values.iter().all(|&v| v == 0.0) {
                continue;
            }
            let label = format!("{}[{}]", col.key(cfg_spec), log_rv.node_ids()[i]);
            let (_, mean, std) = standardise_window(&values, &label)?;
            col_stats[c][i] = (mean, std);
        }
    }
    let mut response_stats = Vec::with_capacity(n);
    for i in 0..n {
        let values: Vec<f64> = target_times.iter().map(|&t| log_rv.value(t, i)).collect();
        let (_, mean, std) = standardise_window(&values, &log_rv.node_ids()[i])?;
        response_stats.push((mean, std));
    }

    let n_rows = target_times.len() * n;
    let mut x = DMatrix::zeros(n_rows, columns.len());
    let mut targets = DVector::zeros(n_rows);
    let mut row_index = Vec::with_capacity(n_rows);
    let mut row = 0;
    for &t in &target_times {
        for i in 0..n {
            for (c, col) in columns.iter().enumerate() {
                let applies = match col.node {
                    Some(owner) => owner == i,
                    None => true,
                };
                if applies {
                    let (mean, std) = col_stats[c][i];
                    x[(row, c)] = (eval.value(col.term, i, t) - mean) / std;
                }
            }
            let (mean, std) = response_stats[i];
            targets[row] = (log_rv.value(t, i) - mean) / std;
            row_index.push((t, i));
            row += 1;
        }
    }
    let design = DesignMatrix {
        x,
        targets,
        row_index,
        columns: columns.to_vec(),
    };
    let fit = fit_ols(&design, cfg_spec, n)?;

    let model = FittedModel {
        spec: cfg_spec.clone(),
        columns: columns.to_vec(),
        coefficients: fit.coefficients.clone(),
        resid_var: fit.resid_var.clone(),
        rank_deficient: fit.rank_deficient,
        standardisation: Standardisation {
            response: response_stats.clone(),
            columns: col_stats.clone(),
        },
        network: network.clone(),
        train_range: (
            log_rv.dates()[train_start].clone(),
            log_rv.dates()[origin - 1].clone(),
        ),
    };

    let sigma2_log: Vec<f64> = (0..n)
        .map(|i| response_stats[i].1.powi(2) * fit.resid_var[i])
        .collect();

    let block_end = (origin + cfg.block).min(t_len);
    let mut rows = Vec::with_capacity(block_end - origin);
    for t in origin..block_end {
        let mut values = Vec::with_capacity(n);
        for i in 0..n {
            let mut y_std = 0.0;
            for (c, col) in columns.iter().enumerate() {
                let applies = match col.node {
                    Some(owner) => owner == i,
                    None => true,
                };
                if !applies {
                    continue;
                }
                let (mean, std) = col_stats[c][i];
                y_std += fit.coefficients[c] * (eval.value(col.term, i, t) - mean) / std;
            }
            let (mean, std) = response_stats[i];
            let y_log = mean + std * y_std;
            values.push((jensen_backtransform(y_log, sigma2_log[i]), y_log));
        }
        rows.push((t - cfg.initial_window, values));
    }

    Ok(BlockOutput {
        refit_date: log_rv.dates()[origin].clone(),
        network,
        coefficients: model.coefficient_map(),
        resid_var: fit.resid_var,
        rows,
    })
}

/// Forecast/actual CSV: `date,node,rv_actual,rv_forecast,logrv_forecast`,
/// date-major then node order.
pub fn write_forecasts_csv(result: &BacktestResult, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["date", "node", "rv_actual", "rv_forecast", "logrv_forecast"])?;
    for (t, date) in result.forecasts.dates().iter().enumerate() {
        for (i, node) in result.forecasts.node_ids().iter().enumerate() {
            writer.write_record([
                date.as_str(),
                node.as_str(),
                &format!("{}", result.actuals.value(t, i)),
                &format!("{}", result.forecasts.value(t, i)),
                &format!("{}", result.log_forecasts.value(t, i)),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Coefficient trajectory CSV: `refit_date,coefficient_key,value`.
pub fn write_coefficients_csv(result: &BacktestResult, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["refit_date", "coefficient_key", "value"])?;
    for record in &result.coefficient_trajectory {
        for (key, value) in &record.coefficients {
            writer.write_record([
                record.refit_date.as_str(),
                key.as_str(),
                &format!("{value}"),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}
