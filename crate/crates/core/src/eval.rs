//! Forecast-loss computation (QLIKE, MSE) and model-comparison tables.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::BacktestResult;
use crate::panel::TimeSeriesPanel;

fn check_shapes(actual: &TimeSeriesPanel, forecast: &TimeSeriesPanel) -> Result<()> {
    if !actual.same_shape(forecast) {
        return Err(Error::NodeMismatch(
            "actual and forecast panels must share dates and nodes".into(),
        ));
    }
    Ok(())
}

fn check_positive(panel: &TimeSeriesPanel, what: &str) -> Result<()> {
    for t in 0..panel.n_rows() {
        for i in 0..panel.n_nodes() {
            let v = panel.value(t, i);
            if v <= 0.0 {
                return Err(Error::NonPositiveEntry {
                    node: format!("{what} {}", panel.node_ids()[i]),
                    date: panel.dates()[t].clone(),
                    value: v,
                });
            }
        }
    }
    Ok(())
}

/// QLIKE loss `mean(log f) + mean(a / f)` over all nodes and dates.
pub fn qlike(actual: &TimeSeriesPanel, forecast: &TimeSeriesPanel) -> Result<f64> {
    check_shapes(actual, forecast)?;
    check_positive(forecast, "forecast")?;
    check_positive(actual, "actual")?;
    let mut log_sum = 0.0;
    let mut ratio_sum = 0.0;
    let count = (actual.n_rows() * actual.n_nodes()) as f64;
    for t in 0..actual.n_rows() {
        for i in 0..actual.n_nodes() {
            log_sum += forecast.value(t, i).ln();
            ratio_sum += actual.value(t, i) / forecast.value(t, i);
        }
    }
    Ok(log_sum / count + ratio_sum / count)
}

/// Mean squared error on the variance level.
pub fn mse(actual: &TimeSeriesPanel, forecast: &TimeSeriesPanel) -> Result<f64> {
    check_shapes(actual, forecast)?;
    let mut acc = 0.0;
    let count = (actual.n_rows() * actual.n_nodes()) as f64;
    for t in 0..actual.n_rows() {
        for i in 0..actual.n_nodes() {
            let e = actual.value(t, i) - forecast.value(t, i);
            acc += e * e;
        }
    }
    Ok(acc / count)
}

fn node_losses(
    actual: &TimeSeriesPanel,
    forecast: &TimeSeriesPanel,
) -> Vec<(String, NodeLoss)> {
    let rows = actual.n_rows() as f64;
    (0..actual.n_nodes())
        .map(|i| {
            let mut log_sum = 0.0;
            let mut ratio_sum = 0.0;
            let mut sq = 0.0;
            for t in 0..actual.n_rows() {
                log_sum += forecast.value(t, i).ln();
                ratio_sum += actual.value(t, i) / forecast.value(t, i);
                let e = actual.value(t, i) - forecast.value(t, i);
                sq += e * e;
            }
            (
                actual.node_ids()[i].clone(),
                NodeLoss {
                    qlike: log_sum / rows + ratio_sum / rows,
                    mse: sq / rows,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeLoss {
    pub qlike: f64,
    pub mse: f64,
}

/// Losses for one model over the common evaluation sample, with ratios to
/// the per-metric best model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossSummary {
    pub label: String,
    pub qlike: f64,
    pub mse: f64,
    pub rel_qlike: f64,
    pub rel_mse: f64,
    pub n_params: usize,
    pub per_node: Vec<(String, NodeLoss)>,
}

/// One model's forecasts for ranking.
pub struct EvalInput<'a> {
    pub label: String,
    pub actuals: &'a TimeSeriesPanel,
    pub forecasts: &'a TimeSeriesPanel,
    pub n_params: usize,
}

/// Rank models by QLIKE (ascending, label as tie-break) over a common
/// evaluation sample, attaching ratios to the per-metric best.
pub fn rank_panels(inputs: &[EvalInput<'_>]) -> Result<Vec<LossSummary>> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput("no models to rank".into()));
    }
    let reference = inputs[0].actuals;
    for input in inputs {
        if !input.actuals.same_shape(reference) || !input.forecasts.same_shape(reference) {
            return Err(Error::NodeMismatch(format!(
                "model {} is evaluated on different dates or nodes",
                input.label
            )));
        }
    }
    let mut summaries: Vec<LossSummary> = inputs
        .iter()
        .map(|input| -> Result<LossSummary> {
            Ok(LossSummary {
                label: input.label.clone(),
                qlike: qlike(input.actuals, input.forecasts)?,
                mse: mse(input.actuals, input.forecasts)?,
                rel_qlike: f64::NAN,
                rel_mse: f64::NAN,
                n_params: input.n_params,
                per_node: node_losses(input.actuals, input.forecasts),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best_qlike = summaries.iter().map(|s| s.qlike).fold(f64::INFINITY, f64::min);
    let best_mse = summaries.iter().map(|s| s.mse).fold(f64::INFINITY, f64::min);
    for s in &mut summaries {
        s.rel_qlike = s.qlike / best_qlike;
        s.rel_mse = s.mse / best_mse;
    }
    summaries.sort_by(|a, b| {
        a.qlike
            .partial_cmp(&b.qlike)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.label.cmp(&b.label))
    });
    Ok(summaries)
}

/// Rank backtest results; see [`rank_panels`].
pub fn rank_models(results: &[(String, &BacktestResult, usize)]) -> Result<Vec<LossSummary>> {
    let inputs: Vec<EvalInput<'_>> = results
        .iter()
        .map(|(label, result, n_params)| EvalInput {
            label: label.clone(),
            actuals: &result.actuals,
            forecasts: &result.forecasts,
            n_params: *n_params,
        })
        .collect();
    rank_panels(&inputs)
}

/// Display metadata for the ranking table.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModelMeta {
    pub variant: String,
    pub network: String,
    pub exogenous: String,
}

/// Ranking CSV: `model,variant,network,exogenous,qlike,rel_qlike,rel_mse,n_params`.
pub fn write_ranking_csv(
    summaries: &[LossSummary],
    meta: &BTreeMap<String, ModelMeta>,
    path: &Path,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "model", "variant", "network", "exogenous", "qlike", "rel_qlike", "rel_mse", "n_params",
    ])?;
    let empty = ModelMeta::default();
    for s in summaries {
        let m = meta.get(&s.label).unwrap_or(&empty);
        writer.write_record([
            s.label.as_str(),
            m.variant.as_str(),
            m.network.as_str(),
            m.exogenous.as_str(),
            &format!("{}", s.qlike),
            &format!("{}", s.rel_qlike),
            &format!("{}", s.rel_mse),
            &format!("{}", s.n_params),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
