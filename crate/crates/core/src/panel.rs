//! Panel data model and construction of response and exogenous series.
//!
//! A [`TimeSeriesPanel`] holds one daily series (log realised variance,
//! returns, an implied-volatility index, ...) for N nodes over T dates.
//! Dates are opaque ISO-8601 labels; all lags elsewhere in the library are
//! positional in trading days.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Date-aligned T x N matrix of one daily series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    node_ids: Vec<String>,
    dates: Vec<String>,
    values: DMatrix<f64>,
}

impl TimeSeriesPanel {
    /// Build a panel, validating the type invariants: strictly increasing
    /// dates, unique node ids, finite values, matching dimensions.
    pub fn new(node_ids: Vec<String>, dates: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != dates.len() || values.ncols() != node_ids.len() {
            return Err(Error::InvalidPanel(format!(
                "values are {}x{} but there are {} dates and {} nodes",
                values.nrows(),
                values.ncols(),
                dates.len(),
                node_ids.len()
            )));
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidPanel(format!(
                    "dates not strictly increasing: {:?} then {:?}",
                    w[0], w[1]
                )));
            }
        }
        let unique: BTreeSet<&String> = node_ids.iter().collect();
        if unique.len() != node_ids.len() {
            return Err(Error::InvalidPanel("duplicate node ids".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPanel("non-finite value".into()));
        }
        Ok(Self {
            node_ids,
            dates,
            values,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Value for row `t`, node column `i`.
    pub fn value(&self, t: usize, i: usize) -> f64 {
        self.values[(t, i)]
    }

    /// One node's series as a vector.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.values.column(i).iter().copied().collect()
    }

    /// Copy of the rows in `range`, same nodes.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            node_ids: self.node_ids.clone(),
            dates: self.dates[start..end].to_vec(),
            values: self.values.rows(start, end - start).into_owned(),
        }
    }

    /// True when `other` covers the same dates and nodes in the same order.
    pub fn same_shape(&self, other: &Self) -> bool {
        self.node_ids == other.node_ids && self.dates == other.dates
    }

    /// Read a panel from CSV with header `date,<node1>,<node2>,...`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let header = reader.headers()?.clone();
        if header.is_empty() || header.get(0) != Some("date") {
            return Err(Error::InvalidPanel(format!(
                "{}: first header column must be `date`",
                path.display()
            )));
        }
        let node_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        if node_ids.is_empty() {
            return Err(Error::InvalidPanel(format!(
                "{}: no node columns",
                path.display()
            )));
        }
        let mut dates = Vec::new();
        let mut rows: Vec<f64> = Vec::new();
        for record in reader.records() {
            let record = record?;
            if record.len() != node_ids.len() + 1 {
                return Err(Error::InvalidPanel(format!(
                    "{}: row {} has {} fields, expected {}",
                    path.display(),
                    dates.len() + 2,
                    record.len(),
                    node_ids.len() + 1
                )));
            }
            dates.push(record[0].to_string());
            for field in record.iter().skip(1) {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::InvalidPanel(format!(
                        "{}: cannot parse value {:?} on {}",
                        path.display(),
                        field,
                        record[0].to_string()
                    ))
                })?;
                rows.push(v);
            }
        }
        let values = DMatrix::from_row_slice(dates.len(), node_ids.len(), &rows);
        Self::new(node_ids, dates, values)
    }

    /// Write the panel in the same CSV format `read_csv` accepts.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header = vec!["date".to_string()];
        header.extend(self.node_ids.iter().cloned());
        writer.write_record(&header)?;
        for (t, date) in self.dates.iter().enumerate() {
            let mut row = vec![date.clone()];
            for i in 0..self.n_nodes() {
                row.push(format!("{}", self.values[(t, i)]));
            }
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// One node-day of intraday log prices on the finest sampling grid.
#[derive(Debug, Clone)]
pub struct IntradayDay {
    log_prices: Vec<f64>,
    base_spacing: usize,
}

impl IntradayDay {
    /// `base_spacing` is the number of finest-grid observations per coarse
    /// (five-minute) interval; there must be enough prices for every
    /// staggered grid to form at least one return.
    pub fn new(log_prices: Vec<f64>, base_spacing: usize) -> Result<Self> {
        if base_spacing == 0 {
            return Err(Error::InvalidInput("base_spacing must be >= 1".into()));
        }
        if log_prices.len() < base_spacing + 1 {
            return Err(Error::InsufficientIntradayData {
                got: log_prices.len(),
                need: base_spacing + 1,
            });
        }
        Ok(Self {
            log_prices,
            base_spacing,
        })
    }

    pub fn log_prices(&self) -> &[f64] {
        &self.log_prices
    }

    pub fn base_spacing(&self) -> usize {
        self.base_spacing
    }
}

/// Subsampled realised variance: average, over `base_spacing` staggered
/// grids, of the sum of squared coarse-interval returns. Grid `l` starts at
/// offset `l - 1` and strides by `base_spacing`; the final price is appended
/// to every grid so each spans the full day.
pub fn compute_rv_ss(day: &IntradayDay) -> f64 {
    let prices = &day.log_prices;
    let spacing = day.base_spacing;
    let last = prices.len() - 1;
    let mut total = 0.0;
    for offset in 0..spacing {
        let mut idx = offset;
        while idx < last {
            let next = (idx + spacing).min(last);
            let r = prices[next] - prices[idx];
            total += r * r;
            idx = next;
        }
    }
    total / spacing as f64
}

/// Elementwise natural log; every entry must be strictly positive.
pub fn log_transform(rv_panel: &TimeSeriesPanel) -> Result<TimeSeriesPanel> {
    let mut values = rv_panel.values.clone();
    for t in 0..rv_panel.n_rows() {
        for i in 0..rv_panel.n_nodes() {
            let v = values[(t, i)];
            if v <= 0.0 {
                return Err(Error::NonPositiveEntry {
                    node: rv_panel.node_ids[i].clone(),
                    date: rv_panel.dates[t].clone(),
                    value: v,
                });
            }
            values[(t, i)] = v.ln();
        }
    }
    TimeSeriesPanel::new(rv_panel.node_ids.clone(), rv_panel.dates.clone(), values)
}

/// Decompose returns into positive and negative parts, r = r+ + r-.
pub fn split_returns(returns: &TimeSeriesPanel) -> (TimeSeriesPanel, TimeSeriesPanel) {
    let pos = returns.values.map(|v| v.max(0.0));
    let neg = returns.values.map(|v| v.min(0.0));
    let good = TimeSeriesPanel {
        node_ids: returns.node_ids.clone(),
        dates: returns.dates.clone(),
        values: pos,
    };
    let bad = TimeSeriesPanel {
        node_ids: returns.node_ids.clone(),
        dates: returns.dates.clone(),
        values: neg,
    };
    (good, bad)
}

/// Open-to-previous-close simple returns; the first date is dropped.
pub fn overnight_returns(
    opens: &TimeSeriesPanel,
    closes: &TimeSeriesPanel,
) -> Result<TimeSeriesPanel> {
    if !opens.same_shape(closes) {
        return Err(Error::NodeMismatch(
            "opens and closes must share dates and nodes".into(),
        ));
    }
    if opens.n_rows() < 2 {
        return Err(Error::InvalidInput(
            "need at least two dates for overnight returns".into(),
        ));
    }
    let n = opens.n_nodes();
    let t_out = opens.n_rows() - 1;
    let mut values = DMatrix::zeros(t_out, n);
    for t in 1..opens.n_rows() {
        for i in 0..n {
            let prev_close = closes.values[(t - 1, i)];
            if prev_close == 0.0 {
                return Err(Error::ZeroClose {
                    node: opens.node_ids[i].clone(),
                    date: opens.dates[t - 1].clone(),
                });
            }
            values[(t - 1, i)] = opens.values[(t, i)] / prev_close - 1.0;
        }
    }
    TimeSeriesPanel::new(
        opens.node_ids.clone(),
        opens.dates[1..].to_vec(),
        values,
    )
}

/// Result of [`align`]: how many dates each input lost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignReport {
    pub n_common_dates: usize,
    pub dropped: BTreeMap<String, usize>,
}

/// Restrict a named set of panels to their common dates, rows in date order
/// and columns in canonical (sorted-label) node order.
pub fn align(
    panels: &BTreeMap<String, TimeSeriesPanel>,
) -> Result<(BTreeMap<String, TimeSeriesPanel>, AlignReport)> {
    let mut iter = panels.iter();
    let (first_name, first) = iter
        .next()
        .ok_or_else(|| Error::InvalidInput("no panels to align".into()))?;
    let mut canonical: Vec<String> = first.node_ids.to_vec();
    canonical.sort();
    for (name, p) in panels {
        let mut sorted = p.node_ids.to_vec();
        sorted.sort();
        if sorted != canonical {
            return Err(Error::NodeMismatch(format!(
                "panel {name} has different nodes than panel {first_name}"
            )));
        }
    }

    let mut common: BTreeSet<&String> = first.dates.iter().collect();
    for p in panels.values() {
        let dates: BTreeSet<&String> = p.dates.iter().collect();
        common = common.intersection(&dates).copied().collect();
    }
    if common.is_empty() {
        return Err(Error::EmptyDateIntersection);
    }

    let mut out = BTreeMap::new();
    let mut dropped = BTreeMap::new();
    for (name, p) in panels {
        let col_of: BTreeMap<&String, usize> = p
            .node_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id, i))
            .collect();
        let keep: Vec<usize> = p
            .dates
            .iter()
            .enumerate()
            .filter(|(_, d)| common.contains(d))
            .map(|(t, _)| t)
            .collect();
        let mut values = DMatrix::zeros(keep.len(), canonical.len());
        for (row, &t) in keep.iter().enumerate() {
            for (col, id) in canonical.iter().enumerate() {
                values[(row, col)] = p.values[(t, col_of[id])];
            }
        }
        let dates: Vec<String> = keep.iter().map(|&t| p.dates[t].clone()).collect();
        dropped.insert(name.clone(), p.n_rows() - keep.len());
        out.insert(
            name.clone(),
            TimeSeriesPanel::new(canonical.clone(), dates, values)?,
        );
    }
    let report = AlignReport {
        n_common_dates: common.len(),
        dropped,
    };
    Ok((out, report))
}
