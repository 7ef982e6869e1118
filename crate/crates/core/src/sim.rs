//! Synthetic GNAR-HARX process generation with known parameters.
//!
//! Exogenous inputs are stationary AR(1) processes generated first; the
//! response then follows the model recursion with Gaussian innovations.
//! Every random stream is a fixed-seed ChaCha stream keyed by node and
//! series, so output is bit-reproducible and independent of iteration
//! order.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::HAR_MAX_LAG;
use crate::network::{neighbor_stages, Network};
use crate::panel::TimeSeriesPanel;

/// AR(1) generator for one exogenous variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogProcess {
    pub name: String,
    /// AR(1) coefficient, strictly inside (-1, 1).
    pub ar: f64,
    pub noise_std: f64,
}

/// True coefficients for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCoefficients {
    pub alpha: [f64; 3],
    pub beta_d: Vec<f64>,
    pub beta_w: Vec<f64>,
    pub beta_m: Vec<f64>,
    /// `lambda[h]` lists `(lag, coefficient)` pairs for exogenous process h.
    pub lambda: Vec<Vec<(usize, f64)>>,
}

impl NodeCoefficients {
    /// Sum of absolute autoregressive and network coefficients; strictly
    /// below one is sufficient for stationarity.
    pub fn stationarity_margin(&self) -> f64 {
        self.alpha.iter().map(|a| a.abs()).sum::<f64>()
            + self.beta_d.iter().map(|b| b.abs()).sum::<f64>()
            + self.beta_w.iter().map(|b| b.abs()).sum::<f64>()
            + self.beta_m.iter().map(|b| b.abs()).sum::<f64>()
    }
}

/// Per-node coefficient table; use [`SimCoefficients::shared`] to broadcast
/// one set of values across all nodes (the global layout).
#[derive(Debug, Clone, PartialEq)]
pub struct SimCoefficients {
    pub nodes: Vec<NodeCoefficients>,
}

impl SimCoefficients {
    pub fn shared(n: usize, coef: NodeCoefficients) -> Self {
        Self {
            nodes: vec![coef; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub network: Network,
    /// Output length after burn-in.
    pub t_len: usize,
    pub burn_in: usize,
    pub coefficients: SimCoefficients,
    /// Innovation standard deviation per node; zero means a noise-free
    /// response driven only by the exogenous inputs.
    pub noise_std: Vec<f64>,
    pub exog: Vec<ExogProcess>,
    pub seed: u64,
    /// First output date (ISO-8601); subsequent dates step over weekdays.
    pub start_date: String,
}

pub const DEFAULT_BURN_IN: usize = 500;

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.network.n_nodes();
        if self.t_len == 0 {
            return Err(Error::InvalidInput("t_len must be positive".into()));
        }
        if self.coefficients.nodes.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} coefficient sets for {} nodes",
                self.coefficients.nodes.len(),
                n
            )));
        }
        if self.noise_std.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} noise entries for {} nodes",
                self.noise_std.len(),
                n
            )));
        }
        if self.noise_std.iter().any(|s| *s < 0.0) {
            return Err(Error::InvalidInput("negative noise_std".into()));
        }
        for e in &self.exog {
            if e.ar.abs() >= 1.0 {
                return Err(Error::InvalidInput(format!(
                    "exogenous process {} has AR coefficient {} outside (-1,1)",
                    e.name, e.ar
                )));
            }
            if e.noise_std < 0.0 {
                return Err(Error::InvalidInput("negative exogenous noise_std".into()));
            }
        }
        let mut worst = 0.0f64;
        for c in &self.coefficients.nodes {
            if c.lambda.len() != self.exog.len() {
                return Err(Error::InvalidInput(format!(
                    "{} lambda groups for {} exogenous processes",
                    c.lambda.len(),
                    self.exog.len()
                )));
            }
            for group in &c.lambda {
                for &(lag, _) in group {
                    if lag > HAR_MAX_LAG {
                        return Err(Error::InvalidInput(format!(
                            "exogenous lag {lag} exceeds the initialised history of {HAR_MAX_LAG}"
                        )));
                    }
                }
            }
            worst = worst.max(c.stationarity_margin());
        }
        if worst >= 1.0 {
            return Err(Error::NonStationary { margin: worst });
        }
        Ok(())
    }
}

fn weekday_dates(start: &str, len: usize) -> Result<Vec<String>> {
    let mut date = NaiveDate::parse_from_str(start, "%Y-%m-%d")
        .map_err(|e| Error::InvalidInput(format!("bad start_date {start}: {e}")))?;
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        if date.weekday().number_from_monday() <= 5 {
            out.push(date.format("%Y-%m-%d").to_string());
        }
        date = date
            .succ_opt()
            .ok_or_else(|| Error::InvalidInput("date range overflow".into()))?;
    }
    Ok(out)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generate the response panel and all exogenous panels. The recursion
/// starts from 22 zero-initialised lags, runs `burn_in + t_len` steps, and
/// keeps the last `t_len` rows.
pub fn simulate(spec: &SimSpec) -> Result<(TimeSeriesPanel, BTreeMap<String, TimeSeriesPanel>)> {
    spec.validate()?;
    let n = spec.network.n_nodes();
    let total = HAR_MAX_LAG + spec.burn_in + spec.t_len;
    let keep_from = HAR_MAX_LAG + spec.burn_in;

    // exogenous AR(1) paths, one ChaCha stream per (process, node)
    let mut exog_values: Vec<DMatrix<f64>> = Vec::with_capacity(spec.exog.len());
    for (h, process) in spec.exog.iter().enumerate() {
        let mut x = DMatrix::zeros(total, n);
        for i in 0..n {
            let mut rng = stream_rng(spec.seed, (n + h * n + i) as u64);
            for t in 1..total {
                let eps: f64 = StandardNormal.sample(&mut rng);
                x[(t, i)] = process.ar * x[(t - 1, i)] + process.noise_std * eps;
            }
        }
        exog_values.push(x);
    }

    let max_stage = spec
        .coefficients
        .nodes
        .iter()
        .flat_map(|c| [c.beta_d.len(), c.beta_w.len(), c.beta_m.len()])
        .max()
        .unwrap_or(0);
    let stages = neighbor_stages(&spec.network, max_stage.max(1))?;

    let mut noise: Vec<ChaCha8Rng> = (0..n).map(|i| stream_rng(spec.seed, i as u64)).collect();
    let mut y = DMatrix::zeros(total, n);
    for t in HAR_MAX_LAG..total {
        for i in 0..n {
            let c = &spec.coefficients.nodes[i];
            let mut value = c.alpha[0] * y[(t - 1, i)]
                + c.alpha[1] * lag_mean(&y, t, i, 2, 5)
                + c.alpha[2] * lag_mean(&y, t, i, 6, 22);
            for (r0, &beta) in c.beta_d.iter().enumerate() {
                value += beta * stage_mean(&y, &stages, t, i, r0 + 1, 1, 1);
            }
            for (r0, &beta) in c.beta_w.iter().enumerate() {
                value += beta * stage_mean(&y, &stages, t, i, r0 + 1, 2, 5);
            }
            for (r0, &beta) in c.beta_m.iter().enumerate() {
                value += beta * stage_mean(&y, &stages, t, i, r0 + 1, 6, 22);
            }
            for (h, group) in c.lambda.iter().enumerate() {
                for &(lag, coef) in group {
                    value += coef * exog_values[h][(t - lag, i)];
                }
            }
            let eps: f64 = StandardNormal.sample(&mut noise[i]);
            y[(t, i)] = value + spec.noise_std[i] * eps;
        }
    }

    let dates = weekday_dates(&spec.start_date, spec.t_len)?;
    let node_ids: Vec<String> = (0..n).map(|i| format!("node{i:02}")).collect();
    let response = TimeSeriesPanel::new(
        node_ids.clone(),
        dates.clone(),
        y.rows(keep_from, spec.t_len).into_owned(),
    )?;
    let mut exog_panels = BTreeMap::new();
    for (h, process) in spec.exog.iter().enumerate() {
        exog_panels.insert(
            process.name.clone(),
            TimeSeriesPanel::new(
                node_ids.clone(),
                dates.clone(),
                exog_values[h].rows(keep_from, spec.t_len).into_owned(),
            )?,
        );
    }
    Ok((response, exog_panels))
}

fn lag_mean(y: &DMatrix<f64>, t: usize, i: usize, from: usize, to: usize) -> f64 {
    let mut acc = 0.0;
    for lag in from..=to {
        acc += y[(t - lag, i)];
    }
    acc / (to - from + 1) as f64
}

fn stage_mean(
    y: &DMatrix<f64>,
    stages: &crate::network::NeighborStages,
    t: usize,
    i: usize,
    r: usize,
    from: usize,
    to: usize,
) -> f64 {
    let members = stages.stage(i, r);
    if members.is_empty() {
        return 0.0;
    }
    let w = stages.weight(i, r);
    members.iter().map(|&j| w * lag_mean(y, t, j, from, to)).sum()
}
