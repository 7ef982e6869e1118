//! Model specification, design-matrix construction, OLS estimation, and the
//! stationarity diagnostic.
//!
//! Every model regresses each node's series on its own HAR components
//! (daily lag, weekly average of lags 2-5, monthly average of lags 6-22),
//! network-aggregated HAR components of r-stage neighbours, and lagged
//! exogenous variables. The three variants differ only in parameter
//! sharing: `global` shares everything, `standard` gives each node its own
//! HAR coefficients, `local` makes every coefficient node-specific
//! (equivalent to independent per-node regressions).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{neighbor_stages, NeighborStages, Network};
use crate::panel::TimeSeriesPanel;

/// Weekly HAR average uses lags 2..=5.
const WEEKLY_LAGS: (usize, usize) = (2, 5);
/// Monthly HAR average uses lags 6..=22.
const MONTHLY_LAGS: (usize, usize) = (6, 22);
/// Longest lag any HAR component reaches back.
pub const HAR_MAX_LAG: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Global,
    Standard,
    Local,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Variant::Global => "global",
            Variant::Standard => "standard",
            Variant::Local => "local",
        };
        f.write_str(s)
    }
}

/// One exogenous variable and the lags at which it enters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExogSpec {
    pub name: String,
    pub lags: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    /// Maximum neighbourhood stages (r_d, r_w, r_m) for the daily, weekly
    /// and monthly network terms.
    pub stages: [usize; 3],
    #[serde(default)]
    pub exog: Vec<ExogSpec>,
}

impl ModelSpec {
    pub fn new(variant: Variant, stages: [usize; 3], exog: Vec<ExogSpec>) -> Self {
        Self {
            variant,
            stages,
            exog,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.exog {
            if e.name.is_empty() {
                return Err(Error::InvalidInput("exogenous variable without a name".into()));
            }
            if !seen.insert(&e.name) {
                return Err(Error::InvalidInput(format!(
                    "duplicate exogenous variable {}",
                    e.name
                )));
            }
            if e.lags.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "exogenous variable {} has an empty lag list",
                    e.name
                )));
            }
        }
        Ok(())
    }

    pub fn max_exog_lag(&self) -> usize {
        self.exog
            .iter()
            .flat_map(|e| e.lags.iter().copied())
            .max()
            .unwrap_or(0)
    }

    /// First usable row index: enough history for the HAR lags and every
    /// exogenous lag.
    pub fn min_t(&self) -> usize {
        HAR_MAX_LAG.max(self.max_exog_lag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Daily,
    Weekly,
    Monthly,
}

impl Horizon {
    fn suffix(self) -> &'static str {
        match self {
            Horizon::Daily => "d",
            Horizon::Weekly => "w",
            Horizon::Monthly => "m",
        }
    }
}

const HORIZONS: [Horizon; 3] = [Horizon::Daily, Horizon::Weekly, Horizon::Monthly];

/// One regressor kind, before node attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Alpha(Horizon),
    /// Network spillover at the given horizon and neighbourhood stage (1-based).
    Beta(Horizon, usize),
    /// Exogenous variable (index into `ModelSpec::exog`) at a given lag.
    Lambda(usize, usize),
}

/// A design column: a term, owned by one node or shared (`None`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnDef {
    pub term: Term,
    pub node: Option<usize>,
}

impl ColumnDef {
    /// Coefficient key, `term[:node]`.
    pub fn key(&self, spec: &ModelSpec) -> String {
        let base = match self.term {
            Term::Alpha(h) => format!("alpha_{}", h.suffix()),
            Term::Beta(h, r) => format!("beta_{}_{}", h.suffix(), r),
            Term::Lambda(h, lag) => format!("lambda_{}_{}", spec.exog[h].name, lag),
        };
        match self.node {
            None => base,
            Some(i) => format!("{base}:{i}"),
        }
    }
}

fn alpha_terms() -> Vec<Term> {
    HORIZONS.iter().map(|&h| Term::Alpha(h)).collect()
}

fn network_terms(spec: &ModelSpec) -> Vec<Term> {
    let mut terms = Vec::new();
    for (h, &r_max) in HORIZONS.iter().zip(spec.stages.iter()) {
        for r in 1..=r_max {
            terms.push(Term::Beta(*h, r));
        }
    }
    terms
}

fn exog_terms(spec: &ModelSpec) -> Vec<Term> {
    let mut terms = Vec::new();
    for (h, e) in spec.exog.iter().enumerate() {
        for &lag in &e.lags {
            terms.push(Term::Lambda(h, lag));
        }
    }
    terms
}

/// Canonical column order for a spec on `n` nodes.
pub fn column_layout(spec: &ModelSpec, n: usize) -> Vec<ColumnDef> {
    let alphas = alpha_terms();
    let betas = network_terms(spec);
    let lambdas = exog_terms(spec);
    let mut cols = Vec::new();
    match spec.variant {
        Variant::Global => {
            for &t in alphas.iter().chain(&betas).chain(&lambdas) {
                cols.push(ColumnDef { term: t, node: None });
            }
        }
        Variant::Standard => {
            for i in 0..n {
                for &t in &alphas {
                    cols.push(ColumnDef { term: t, node: Some(i) });
                }
            }
            for &t in betas.iter().chain(&lambdas) {
                cols.push(ColumnDef { term: t, node: None });
            }
        }
        Variant::Local => {
            for i in 0..n {
                for &t in alphas.iter().chain(&betas).chain(&lambdas) {
                    cols.push(ColumnDef { term: t, node: Some(i) });
                }
            }
        }
    }
    cols
}

/// Closed-form parameter counts per variant: 3 HAR terms, one per network
/// stage, one per exogenous lag; per-node blocks multiply by `n`.
pub fn param_count(spec: &ModelSpec, n: usize) -> usize {
    let net: usize = spec.stages.iter().sum();
    let exog: usize = spec.exog.iter().map(|e| e.lags.len()).sum();
    match spec.variant {
        Variant::Global => 3 + net + exog,
        Variant::Standard => 3 * n + net + exog,
        Variant::Local => n * (3 + net + exog),
    }
}

/// HAR components of node `i` at row `t`: the lag-1 value, the mean of lags
/// 2..=5, and the mean of lags 6..=22.
pub fn har_components(y: &TimeSeriesPanel, t: usize, i: usize) -> Result<(f64, f64, f64)> {
    if t < HAR_MAX_LAG {
        return Err(Error::InsufficientHistory {
            t,
            need: HAR_MAX_LAG,
        });
    }
    let daily = y.value(t - 1, i);
    let weekly = lag_average(y, t, i, WEEKLY_LAGS);
    let monthly = lag_average(y, t, i, MONTHLY_LAGS);
    Ok((daily, weekly, monthly))
}

fn lag_average(y: &TimeSeriesPanel, t: usize, i: usize, (from, to): (usize, usize)) -> f64 {
    let mut acc = 0.0;
    for lag in from..=to {
        acc += y.value(t - lag, i);
    }
    acc / (to - from + 1) as f64
}

fn har_component(y: &TimeSeriesPanel, t: usize, i: usize, horizon: Horizon) -> f64 {
    match horizon {
        Horizon::Daily => y.value(t - 1, i),
        Horizon::Weekly => lag_average(y, t, i, WEEKLY_LAGS),
        Horizon::Monthly => lag_average(y, t, i, MONTHLY_LAGS),
    }
}

/// Evaluates raw regressor values for one spec against fixed panels and a
/// network. Shared between design construction and out-of-sample
/// forecasting so both use identical term semantics.
pub struct TermEvaluator<'a> {
    y: &'a TimeSeriesPanel,
    exog: Vec<&'a TimeSeriesPanel>,
    stages: NeighborStages,
}

impl<'a> TermEvaluator<'a> {
    pub fn new(
        y: &'a TimeSeriesPanel,
        exog_panels: &'a BTreeMap<String, TimeSeriesPanel>,
        net: &Network,
        spec: &ModelSpec,
    ) -> Result<Self> {
        spec.validate()?;
        if net.n_nodes() != y.n_nodes() {
            return Err(Error::NodeMismatch(format!(
                "network has {} nodes, panel has {}",
                net.n_nodes(),
                y.n_nodes()
            )));
        }
        let mut exog = Vec::with_capacity(spec.exog.len());
        for e in &spec.exog {
            let p = exog_panels.get(&e.name).ok_or_else(|| {
                Error::InvalidInput(format!("missing exogenous panel {}", e.name))
            })?;
            if !p.same_shape(y) {
                return Err(Error::NodeMismatch(format!(
                    "exogenous panel {} is not aligned with the response",
                    e.name
                )));
            }
            exog.push(p);
        }
        let r_max = spec.stages.iter().copied().max().unwrap_or(0);
        let stages = neighbor_stages(net, r_max.max(1))?;
        Ok(Self { y, exog, stages })
    }

    /// Raw regressor value for `(term, node)` at row `t`. Empty
    /// neighbourhood stages contribute zero.
    pub fn value(&self, term: Term, node: usize, t: usize) -> f64 {
        match term {
            Term::Alpha(h) => har_component(self.y, t, node, h),
            Term::Beta(h, r) => {
                let members = self.stages.stage(node, r);
                if members.is_empty() {
                    return 0.0;
                }
                let w = self.stages.weight(node, r);
                members
                    .iter()
                    .map(|&j| w * har_component(self.y, t, j, h))
                    .sum()
            }
            Term::Lambda(h, lag) => self.exog[h].value(t - lag, node),
        }
    }
}

/// Stacked regression pieces: row `(t, i)` holds node `i`'s regressors at
/// time `t`, target `y_{i,t}`.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub targets: DVector<f64>,
    pub row_index: Vec<(usize, usize)>,
    pub columns: Vec<ColumnDef>,
}

/// Build the full design for rows `t = min_t .. T`, all nodes, in row-major
/// (time, node) order.
pub fn build_design(
    y: &TimeSeriesPanel,
    exog_panels: &BTreeMap<String, TimeSeriesPanel>,
    net: &Network,
    spec: &ModelSpec,
) -> Result<DesignMatrix> {
    let eval = TermEvaluator::new(y, exog_panels, net, spec)?;
    let n = y.n_nodes();
    let t0 = spec.min_t();
    if y.n_rows() <= t0 {
        return Err(Error::InsufficientHistory {
            t: y.n_rows(),
            need: t0 + 1,
        });
    }
    let columns = column_layout(spec, n);
    let n_rows = (y.n_rows() - t0) * n;
    let mut x = DMatrix::zeros(n_rows, columns.len());
    let mut targets = DVector::zeros(n_rows);
    let mut row_index = Vec::with_capacity(n_rows);
    let mut row = 0;
    for t in t0..y.n_rows() {
        for i in 0..n {
            for (c, col) in columns.iter().enumerate() {
                x[(row, c)] = match col.node {
                    Some(owner) if owner != i => 0.0,
                    _ => eval.value(col.term, i, t),
                };
            }
            targets[row] = y.value(t, i);
            row_index.push((t, i));
            row += 1;
        }
    }
    Ok(DesignMatrix {
        x,
        targets,
        row_index,
        columns,
    })
}

/// Least-squares fit of a design matrix.
#[derive(Debug, Clone)]
pub struct OlsFit {
    /// One coefficient per design column, canonical order.
    pub coefficients: DVector<f64>,
    /// Per-node residual variance, degrees of freedom corrected.
    pub resid_var: Vec<f64>,
    /// Residuals aligned with the design's row index.
    pub residuals: DVector<f64>,
    /// True when any underlying regression was rank-deficient and a
    /// minimum-norm solution was taken.
    pub rank_deficient: bool,
}

fn svd_min_norm(x: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    let svd = x.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let eps = sigma_max * x.nrows().max(x.ncols()) as f64 * f64::EPSILON;
    let rank = svd.rank(eps);
    let solution = svd
        .solve(b, eps)
        .map_err(|e| Error::Estimation(format!("SVD solve failed: {e}")))?;
    Ok((solution.column(0).into_owned(), rank < x.ncols()))
}

/// Solve the variant's regression(s): one pooled solve for `global` and
/// `standard`, independent per-node solves for `local`. Rank deficiency
/// yields the minimum-norm solution and sets a warning flag instead of
/// failing.
pub fn fit_ols(design: &DesignMatrix, spec: &ModelSpec, n_nodes: usize) -> Result<OlsFit> {
    let n_cols = design.columns.len();
    let n_rows = design.x.nrows();
    if n_rows == 0 {
        return Err(Error::InsufficientRows { rows: 0, cols: n_cols });
    }
    let mut coefficients = DVector::zeros(n_cols);
    let mut rank_deficient = false;

    match spec.variant {
        Variant::Global | Variant::Standard => {
            if n_rows < n_cols {
                return Err(Error::InsufficientRows {
                    rows: n_rows,
                    cols: n_cols,
                });
            }
            let (beta, warn) = svd_min_norm(&design.x, &design.targets)?;
            coefficients = beta;
            rank_deficient = warn;
        }
        Variant::Local => {
            for node in 0..n_nodes {
                let rows: Vec<usize> = design
                    .row_index
                    .iter()
                    .enumerate()
                    .filter(|(_, &(_, i))| i == node)
                    .map(|(r, _)| r)
                    .collect();
                let cols: Vec<usize> = design
                    .columns
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.node == Some(node))
                    .map(|(c, _)| c)
                    .collect();
                if rows.len() < cols.len() {
                    return Err(Error::InsufficientRows {
                        rows: rows.len(),
                        cols: cols.len(),
                    });
                }
                let mut x = DMatrix::zeros(rows.len(), cols.len());
                let mut b = DVector::zeros(rows.len());
                for (a, &r) in rows.iter().enumerate() {
                    for (k, &c) in cols.iter().enumerate() {
                        x[(a, k)] = design.x[(r, c)];
                    }
                    b[a] = design.targets[r];
                }
                let (beta, warn) = svd_min_norm(&x, &b)?;
                rank_deficient |= warn;
                for (k, &c) in cols.iter().enumerate() {
                    coefficients[c] = beta[k];
                }
            }
        }
    }

    let residuals = &design.targets - &design.x * &coefficients;
    let mut rss = vec![0.0f64; n_nodes];
    let mut counts = vec![0usize; n_nodes];
    for (r, &(_, i)) in design.row_index.iter().enumerate() {
        rss[i] += residuals[r] * residuals[r];
        counts[i] += 1;
    }
    let mut resid_var = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let k = match spec.variant {
            Variant::Global | Variant::Standard => n_cols,
            Variant::Local => design.columns.iter().filter(|c| c.node == Some(i)).count(),
        };
        if counts[i] <= k {
            return Err(Error::InsufficientRows {
                rows: counts[i],
                cols: k,
            });
        }
        resid_var.push(rss[i] / (counts[i] - k) as f64);
    }

    Ok(OlsFit {
        coefficients,
        resid_var,
        residuals,
        rank_deficient,
    })
}

/// Per-series standardisation statistics attached to a fitted model:
/// `response[i]` is node i's (mean, std); `columns[c][i]` the stats used for
/// column `c` on node i's rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardisation {
    pub response: Vec<(f64, f64)>,
    pub columns: Vec<Vec<(f64, f64)>>,
}

impl Standardisation {
    /// Identity stats: fitting happened on raw values.
    pub fn identity(n_nodes: usize, n_cols: usize) -> Self {
        Self {
            response: vec![(0.0, 1.0); n_nodes],
            columns: vec![vec![(0.0, 1.0); n_nodes]; n_cols],
        }
    }
}

/// Estimated model with everything needed to forecast and serialise it.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub columns: Vec<ColumnDef>,
    pub coefficients: DVector<f64>,
    pub resid_var: Vec<f64>,
    pub rank_deficient: bool,
    pub standardisation: Standardisation,
    pub network: Network,
    pub train_range: (String, String),
}

impl FittedModel {
    /// Coefficients as `(key, value)` pairs in canonical column order.
    pub fn coefficient_map(&self) -> Vec<(String, f64)> {
        self.columns
            .iter()
            .zip(self.coefficients.iter())
            .map(|(c, &v)| (c.key(&self.spec), v))
            .collect()
    }

    pub fn coefficient(&self, key: &str) -> Option<f64> {
        self.coefficient_map()
            .into_iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v)
    }

    pub fn to_json(&self) -> Result<String> {
        let coefficients: BTreeMap<String, f64> = self.coefficient_map().into_iter().collect();
        let doc = serde_json::json!({
            "spec": self.spec,
            "coefficients": coefficients,
            "resid_var": self.resid_var,
            "standardisation": self.standardisation,
            "network": {
                "n_nodes": self.network.n_nodes(),
                "edges": self.network.edges().collect::<Vec<_>>(),
            },
            "train_range": self.train_range,
            "rank_deficient": self.rank_deficient,
        });
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

/// Stationarity diagnostic for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStationarity {
    pub node: usize,
    /// Sum of absolute HAR and network coefficients; the process is
    /// stationary when this is strictly below one.
    pub margin: f64,
    pub stationary: bool,
}

/// Sufficient-condition check `|a_d| + |a_w| + |a_m| + sum_r |b_.r| < 1`
/// per node. Reported as a diagnostic only; estimation never enforces it.
pub fn stationarity_check(model: &FittedModel) -> Vec<NodeStationarity> {
    let n = model.resid_var.len();
    (0..n)
        .map(|i| {
            let mut margin = 0.0;
            for (col, &coef) in model.columns.iter().zip(model.coefficients.iter()) {
                let applies = match col.node {
                    None => true,
                    Some(owner) => owner == i,
                };
                if !applies {
                    continue;
                }
                match col.term {
                    Term::Alpha(_) | Term::Beta(_, _) => margin += coef.abs(),
                    Term::Lambda(_, _) => {}
                }
            }
            NodeStationarity {
                node: i,
                margin,
                stationary: margin < 1.0,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fully_connected;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp_panel(n_rows: usize, n_nodes: usize) -> TimeSeriesPanel {
        let mut values = DMatrix::zeros(n_rows, n_nodes);
        for t in 0..n_rows {
            for i in 0..n_nodes {
                values[(t, i)] = t as f64;
            }
        }
        TimeSeriesPanel::new(
            (0..n_nodes).map(|i| format!("n{i}")).collect(),
            (0..n_rows).map(|t| format!("d{t:05}")).collect(),
            values,
        )
        .unwrap()
    }

    fn panel_from(values: DMatrix<f64>) -> TimeSeriesPanel {
        TimeSeriesPanel::new(
            (0..values.ncols()).map(|i| format!("n{i}")).collect(),
            (0..values.nrows()).map(|t| format!("d{t:05}")).collect(),
            values,
        )
        .unwrap()
    }

    fn har_spec(variant: Variant) -> ModelSpec {
        ModelSpec::new(variant, [0, 0, 0], vec![])
    }

    fn iv_spec(variant: Variant) -> ModelSpec {
        ModelSpec::new(
            variant,
            [1, 1, 1],
            vec![ExogSpec {
                name: "iv".into(),
                lags: vec![1],
            }],
        )
    }

    #[test]
    fn har_components_on_linear_ramp() {
        let y = ramp_panel(30, 1);
        let (d, w, m) = har_components(&y, 23, 0).unwrap();
        assert_eq!((d, w, m), (22.0, 19.5, 9.0));
    }

    #[test]
    fn har_components_on_constant_series() {
        let y = panel_from(DMatrix::from_element(40, 2, 3.25));
        let (d, w, m) = har_components(&y, 30, 1).unwrap();
        assert_eq!((d, w, m), (3.25, 3.25, 3.25));
    }

    #[test]
    fn har_components_match_direct_averages() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values = DMatrix::from_fn(30, 1, |_, _| rng.random_range(-2.0..2.0));
        let y = panel_from(values.clone());
        for t in 22..30 {
            let (d, w, m) = har_components(&y, t, 0).unwrap();
            assert_eq!(d, values[(t - 1, 0)]);
            let weekly: f64 = (2..=5).map(|l| values[(t - l, 0)]).sum::<f64>() / 4.0;
            let monthly: f64 = (6..=22).map(|l| values[(t - l, 0)]).sum::<f64>() / 17.0;
            assert_relative_eq!(w, weekly, max_relative = 1e-14);
            assert_relative_eq!(m, monthly, max_relative = 1e-14);
        }
    }

    #[test]
    fn har_components_reject_short_history() {
        let y = ramp_panel(30, 1);
        assert!(matches!(
            har_components(&y, 21, 0),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn param_count_reproduces_reference_counts() {
        // global GNAR-HARX with one-lag implied volatility: 7 parameters
        assert_eq!(param_count(&iv_spec(Variant::Global), 10), 7);
        // ten independent HARX models with one exogenous lag: 40 in total
        let harx = ModelSpec::new(
            Variant::Local,
            [0, 0, 0],
            vec![ExogSpec {
                name: "iv".into(),
                lags: vec![1],
            }],
        );
        assert_eq!(param_count(&harx, 10), 40);
        // fully node-specific variant
        assert_eq!(param_count(&iv_spec(Variant::Local), 10), 70);
        assert_eq!(param_count(&iv_spec(Variant::Standard), 10), 3 * 10 + 3 + 1);
    }

    #[test]
    fn global_design_has_seven_columns_with_iv() {
        let y = ramp_panel(40, 10);
        let iv = ramp_panel(40, 10);
        let mut exog = BTreeMap::new();
        exog.insert("iv".to_string(), iv);
        let net = fully_connected(10).unwrap();
        let design = build_design(&y, &exog, &net, &iv_spec(Variant::Global)).unwrap();
        assert_eq!(design.x.ncols(), 7);
        assert_eq!(design.x.nrows(), (40 - 22) * 10);
    }

    #[test]
    fn empty_network_har_design_is_three_har_columns() {
        let y = ramp_panel(30, 1);
        let design = build_design(
            &y,
            &BTreeMap::new(),
            &Network::empty(1).unwrap(),
            &har_spec(Variant::Global),
        )
        .unwrap();
        assert_eq!(design.x.ncols(), 3);
        for (r, &(t, i)) in design.row_index.iter().enumerate() {
            let (d, w, m) = har_components(&y, t, i).unwrap();
            assert_eq!(design.x[(r, 0)], d);
            assert_eq!(design.x[(r, 1)], w);
            assert_eq!(design.x[(r, 2)], m);
        }
    }

    #[test]
    fn empty_network_stage_columns_are_identically_zero() {
        let y = ramp_panel(30, 3);
        let spec = ModelSpec::new(Variant::Global, [1, 1, 1], vec![]);
        let design = build_design(&y, &BTreeMap::new(), &Network::empty(3).unwrap(), &spec).unwrap();
        assert_eq!(design.x.ncols(), 6);
        for r in 0..design.x.nrows() {
            for c in 3..6 {
                assert_eq!(design.x[(r, c)], 0.0);
            }
        }
    }

    #[test]
    fn standard_and_local_coincide_on_single_node() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = panel_from(DMatrix::from_fn(60, 1, |_, _| rng.random_range(-1.0..1.0)));
        let iv = panel_from(DMatrix::from_fn(60, 1, |_, _| rng.random_range(-1.0..1.0)));
        let mut exog = BTreeMap::new();
        exog.insert("iv".to_string(), iv);
        let net = Network::empty(1).unwrap();
        let standard = build_design(&y, &exog, &net, &iv_spec(Variant::Standard)).unwrap();
        let local = build_design(&y, &exog, &net, &iv_spec(Variant::Local)).unwrap();
        assert_eq!(standard.x, local.x);
        assert_eq!(standard.targets, local.targets);
    }

    #[test]
    fn design_rejects_misaligned_and_mismatched_inputs() {
        let y = ramp_panel(40, 3);
        let mut exog = BTreeMap::new();
        exog.insert("iv".to_string(), ramp_panel(39, 3));
        let net = fully_connected(3).unwrap();
        assert!(build_design(&y, &exog, &net, &iv_spec(Variant::Global)).is_err());
        let wrong_net = fully_connected(4).unwrap();
        assert!(build_design(&y, &BTreeMap::new(), &wrong_net, &har_spec(Variant::Global)).is_err());
    }

    /// Iterate the model equation with zero innovations: the fitted
    /// coefficients must reproduce the generator exactly.
    fn deterministic_panel(
        n: usize,
        t_len: usize,
        alpha: [f64; 3],
        beta: [f64; 3],
        lambda: f64,
    ) -> (TimeSeriesPanel, TimeSeriesPanel) {
        let net = fully_connected(n).unwrap();
        let stages = neighbor_stages(&net, 1).unwrap();
        let mut x = DMatrix::zeros(t_len, n);
        for t in 0..t_len {
            for i in 0..n {
                x[(t, i)] = (0.7 * t as f64 + 1.3 * i as f64).sin();
            }
        }
        let mut y = DMatrix::zeros(t_len, n);
        for t in HAR_MAX_LAG..t_len {
            for i in 0..n {
                let d = y[(t - 1, i)];
                let w: f64 = (2..=5).map(|l| y[(t - l, i)]).sum::<f64>() / 4.0;
                let m: f64 = (6..=22).map(|l| y[(t - l, i)]).sum::<f64>() / 17.0;
                let members = stages.stage(i, 1);
                let wgt = stages.weight(i, 1);
                let nd: f64 = members.iter().map(|&j| wgt * y[(t - 1, j)]).sum();
                let nw: f64 = members
                    .iter()
                    .map(|&j| wgt * (2..=5).map(|l| y[(t - l, j)]).sum::<f64>() / 4.0)
                    .sum();
                let nm: f64 = members
                    .iter()
                    .map(|&j| wgt * (6..=22).map(|l| y[(t - l, j)]).sum::<f64>() / 17.0)
                    .sum();
                y[(t, i)] = alpha[0] * d
                    + alpha[1] * w
                    + alpha[2] * m
                    + beta[0] * nd
                    + beta[1] * nw
                    + beta[2] * nm
                    + lambda * x[(t - 1, i)];
            }
        }
        (panel_from(y), panel_from(x))
    }

    #[test]
    fn zero_noise_global_fit_recovers_generator() {
        let alpha = [0.25, 0.3, 0.15];
        let beta = [0.1, -0.05, 0.02];
        let lambda = 0.4;
        let (y, x) = deterministic_panel(3, 160, alpha, beta, lambda);
        let mut exog = BTreeMap::new();
        exog.insert("iv".to_string(), x);
        let net = fully_connected(3).unwrap();
        let spec = iv_spec(Variant::Global);
        let design = build_design(&y, &exog, &net, &spec).unwrap();
        let fit = fit_ols(&design, &spec, 3).unwrap();
        let expected = [alpha[0], alpha[1], alpha[2], beta[0], beta[1], beta[2], lambda];
        for (k, &e) in expected.iter().enumerate() {
            assert!(
                (fit.coefficients[k] - e).abs() < 1e-8,
                "coefficient {k}: {} vs {e}",
                fit.coefficients[k]
            );
        }
        assert!(!fit.rank_deficient);
        for v in &fit.resid_var {
            assert!(*v < 1e-16);
        }
    }

    #[test]
    fn zero_targets_give_zero_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut y = panel_from(DMatrix::from_fn(50, 2, |_, _| rng.random_range(-1.0..1.0)));
        // targets are rows >= 22 of y; rebuild y with those rows zeroed
        let mut values = y.values().clone();
        for t in HAR_MAX_LAG..50 {
            for i in 0..2 {
                values[(t, i)] = 0.0;
            }
        }
        y = panel_from(values);
        let net = fully_connected(2).unwrap();
        let spec = ModelSpec::new(Variant::Global, [1, 0, 0], vec![]);
        let design = build_design(&y, &BTreeMap::new(), &net, &spec).unwrap();
        // zeroed targets but non-degenerate regressors in the first rows:
        // restrict to rows whose lags still hit the random prefix
        let fit = fit_ols(&design, &spec, 2).unwrap();
        // residual targets are all zero, so the least-squares solution is zero
        for c in 0..design.x.ncols() {
            assert!(fit.coefficients[c].abs() < 1e-10);
        }
    }

    #[test]
    fn duplicated_column_warns_and_keeps_fitted_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = panel_from(DMatrix::from_fn(80, 2, |_, _| rng.random_range(-1.0..1.0)));
        let series = DMatrix::from_fn(80, 2, |_, _| rng.random_range(-1.0..1.0));
        let mut exog_dup = BTreeMap::new();
        exog_dup.insert("a".to_string(), panel_from(series.clone()));
        exog_dup.insert("b".to_string(), panel_from(series.clone()));
        let net = fully_connected(2).unwrap();
        let spec_dup = ModelSpec::new(
            Variant::Global,
            [0, 0, 0],
            vec![
                ExogSpec { name: "a".into(), lags: vec![1] },
                ExogSpec { name: "b".into(), lags: vec![1] },
            ],
        );
        let design_dup = build_design(&y, &exog_dup, &net, &spec_dup).unwrap();
        let fit_dup = fit_ols(&design_dup, &spec_dup, 2).unwrap();
        assert!(fit_dup.rank_deficient);

        let spec_single = ModelSpec::new(
            Variant::Global,
            [0, 0, 0],
            vec![ExogSpec { name: "a".into(), lags: vec![1] }],
        );
        let design_single = build_design(&y, &exog_dup, &net, &spec_single).unwrap();
        let fit_single = fit_ols(&design_single, &spec_single, 2).unwrap();
        assert!(!fit_single.rank_deficient);

        let fitted_dup = &design_dup.x * &fit_dup.coefficients;
        let fitted_single = &design_single.x * &fit_single.coefficients;
        for r in 0..fitted_dup.len() {
            assert!((fitted_dup[r] - fitted_single[r]).abs() < 1e-9);
        }
        // minimum-norm splits the shared weight across the twin columns
        assert!(
            (fit_dup.coefficients[3] - fit_dup.coefficients[4]).abs() < 1e-9,
            "duplicate columns should share the coefficient"
        );
    }

    #[test]
    fn residuals_are_orthogonal_to_design_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let y = panel_from(DMatrix::from_fn(120, 3, |_, _| rng.random_range(-1.0..1.0)));
        let net = fully_connected(3).unwrap();
        for variant in [Variant::Global, Variant::Standard, Variant::Local] {
            let spec = ModelSpec::new(variant, [1, 1, 1], vec![]);
            let design = build_design(&y, &BTreeMap::new(), &net, &spec).unwrap();
            let fit = fit_ols(&design, &spec, 3).unwrap();
            let xtr = design.x.transpose() * &fit.residuals;
            let scale = design.x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for c in 0..xtr.len() {
                // local solves are per node, but cross-node inner products
                // vanish there too because off-block entries are zero
                assert!(
                    xtr[c].abs() <= 1e-8 * scale * design.x.nrows() as f64,
                    "column {c}: X'r = {}",
                    xtr[c]
                );
            }
        }
    }

    #[test]
    fn fitted_values_invariant_under_row_reordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = panel_from(DMatrix::from_fn(70, 2, |_, _| rng.random_range(-1.0..1.0)));
        let net = fully_connected(2).unwrap();
        let spec = ModelSpec::new(Variant::Global, [1, 0, 0], vec![]);
        let design = build_design(&y, &BTreeMap::new(), &net, &spec).unwrap();
        let fit = fit_ols(&design, &spec, 2).unwrap();

        let n_rows = design.x.nrows();
        let perm: Vec<usize> = (0..n_rows).rev().collect();
        let mut shuffled = design.clone();
        let mut x = DMatrix::zeros(n_rows, design.x.ncols());
        let mut targets = DVector::zeros(n_rows);
        let mut row_index = Vec::with_capacity(n_rows);
        for (new_r, &old_r) in perm.iter().enumerate() {
            for c in 0..design.x.ncols() {
                x[(new_r, c)] = design.x[(old_r, c)];
            }
            targets[new_r] = design.targets[old_r];
            row_index.push(design.row_index[old_r]);
        }
        shuffled.x = x;
        shuffled.targets = targets;
        shuffled.row_index = row_index;
        let fit_shuffled = fit_ols(&shuffled, &spec, 2).unwrap();
        for c in 0..design.x.ncols() {
            assert!((fit.coefficients[c] - fit_shuffled.coefficients[c]).abs() < 1e-9);
        }
    }

    #[test]
    fn variants_collapse_on_empty_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let y = panel_from(DMatrix::from_fn(90, 1, |_, _| rng.random_range(-1.0..1.0)));
        let net = Network::empty(1).unwrap();
        let mut coefs = Vec::new();
        for variant in [Variant::Global, Variant::Standard, Variant::Local] {
            let spec = har_spec(variant);
            let design = build_design(&y, &BTreeMap::new(), &net, &spec).unwrap();
            let fit = fit_ols(&design, &spec, 1).unwrap();
            coefs.push(fit.coefficients.clone());
        }
        for k in 0..3 {
            assert!((coefs[0][k] - coefs[1][k]).abs() < 1e-10);
            assert!((coefs[0][k] - coefs[2][k]).abs() < 1e-10);
        }
    }

    fn dummy_model(variant: Variant, n: usize, coefs: &[f64]) -> FittedModel {
        let spec = ModelSpec::new(variant, [1, 1, 1], vec![]);
        let columns = column_layout(&spec, n);
        assert_eq!(columns.len(), coefs.len());
        FittedModel {
            spec,
            columns,
            coefficients: DVector::from_row_slice(coefs),
            resid_var: vec![0.1; n],
            rank_deficient: false,
            standardisation: Standardisation::identity(n, coefs.len()),
            network: fully_connected(n).unwrap(),
            train_range: ("d0".into(), "d1".into()),
        }
    }

    #[test]
    fn stationarity_check_examples() {
        let ok = dummy_model(Variant::Global, 2, &[0.3, 0.2, 0.1, 0.1, 0.1, 0.1]);
        for s in stationarity_check(&ok) {
            assert_relative_eq!(s.margin, 0.9, max_relative = 1e-12);
            assert!(s.stationary);
        }
        let boundary = dummy_model(Variant::Global, 2, &[0.5, 0.3, 0.2, 0.0, 0.0, 0.0]);
        for s in stationarity_check(&boundary) {
            assert_eq!(s.margin, 1.0);
            assert!(!s.stationary);
        }
        let mixed = dummy_model(Variant::Global, 2, &[0.5, -0.3, 0.1, -0.2, 0.0, 0.0]);
        for s in stationarity_check(&mixed) {
            assert_relative_eq!(s.margin, 1.1, max_relative = 1e-12);
            assert!(!s.stationary);
        }
    }

    #[test]
    fn coefficient_keys_follow_term_node_format() {
        let spec = iv_spec(Variant::Standard);
        let columns = column_layout(&spec, 2);
        let keys: Vec<String> = columns.iter().map(|c| c.key(&spec)).collect();
        assert_eq!(
            keys,
            vec![
                "alpha_d:0", "alpha_w:0", "alpha_m:0",
                "alpha_d:1", "alpha_w:1", "alpha_m:1",
                "beta_d_1", "beta_w_1", "beta_m_1",
                "lambda_iv_1",
            ]
        );
    }

    proptest! {
        #[test]
        fn design_column_count_equals_param_count(
            variant_idx in 0usize..3,
            rd in 0usize..3,
            rw in 0usize..3,
            rm in 0usize..3,
            n in 1usize..7,
            n_lags in 0usize..3,
        ) {
            let variant = [Variant::Global, Variant::Standard, Variant::Local][variant_idx];
            let exog = if n_lags == 0 {
                vec![]
            } else {
                vec![ExogSpec { name: "x".into(), lags: (1..=n_lags).collect() }]
            };
            let spec = ModelSpec::new(variant, [rd, rw, rm], exog);
            let y = ramp_panel(30, n);
            let mut exog_panels = BTreeMap::new();
            exog_panels.insert("x".to_string(), ramp_panel(30, n));
            let net = fully_connected(n).unwrap();
            let design = build_design(&y, &exog_panels, &net, &spec).unwrap();
            prop_assert_eq!(design.x.ncols(), param_count(&spec, n));
            prop_assert_eq!(design.columns.len(), param_count(&spec, n));
        }
    }
}
