//! Run configuration files (JSON), one schema per subcommand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gnarharx::error::{Error, Result};
use gnarharx::forecast::{NetworkMode, RollingConfig};
use gnarharx::model::{ExogSpec, Variant};
use gnarharx::network::Network;
use gnarharx::sim::{ExogProcess, NodeCoefficients, SimCoefficients, SimSpec};

pub fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(Error::Json)
}

/// Raw input series for `ingest`. Either a level realised-variance panel or
/// an already log-transformed one must be present; everything else is
/// optional and only produces the series it enables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestConfig {
    #[serde(default)]
    pub rv: Option<PathBuf>,
    #[serde(default)]
    pub log_rv: Option<PathBuf>,
    #[serde(default)]
    pub returns: Option<PathBuf>,
    #[serde(default)]
    pub opens: Option<PathBuf>,
    #[serde(default)]
    pub closes: Option<PathBuf>,
    #[serde(default)]
    pub iv: Option<PathBuf>,
}

/// Scalar shared across nodes, or one value per node.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Broadcast<T> {
    Shared(T),
    PerNode(Vec<T>),
}

impl<T: Clone> Broadcast<T> {
    pub fn resolve(&self, n: usize, what: &str) -> Result<Vec<T>> {
        match self {
            Broadcast::Shared(v) => Ok(vec![v.clone(); n]),
            Broadcast::PerNode(values) => {
                if values.len() != n {
                    return Err(Error::InvalidInput(format!(
                        "{what}: {} entries for {n} nodes",
                        values.len()
                    )));
                }
                Ok(values.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NetworkConfig {
    FullyConnected,
    Empty,
    Edges { edges: Vec<(usize, usize)> },
}

impl NetworkConfig {
    pub fn build(&self, n: usize) -> Result<Network> {
        match self {
            NetworkConfig::FullyConnected => gnarharx::network::fully_connected(n),
            NetworkConfig::Empty => Network::empty(n),
            NetworkConfig::Edges { edges } => Network::new(n, edges.iter().copied()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExogSimConfig {
    pub name: String,
    pub ar: f64,
    pub noise_std: f64,
    /// Lags and matching coefficients; coefficients may be per node.
    pub lags: Vec<usize>,
    pub coefs: Broadcast<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientsConfig {
    pub alpha: Broadcast<[f64; 3]>,
    #[serde(default)]
    pub beta_d: Option<Broadcast<Vec<f64>>>,
    #[serde(default)]
    pub beta_w: Option<Broadcast<Vec<f64>>>,
    #[serde(default)]
    pub beta_m: Option<Broadcast<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub n_nodes: usize,
    pub t_len: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    pub seed: u64,
    #[serde(default = "default_start_date")]
    pub start_date: String,
    pub network: NetworkConfig,
    pub noise_std: Broadcast<f64>,
    pub coefficients: CoefficientsConfig,
    #[serde(default)]
    pub exog: Vec<ExogSimConfig>,
}

fn default_burn_in() -> usize {
    gnarharx::sim::DEFAULT_BURN_IN
}

fn default_start_date() -> String {
    "2010-01-04".to_string()
}

impl SimulateConfig {
    pub fn to_sim_spec(&self, seed_override: Option<u64>) -> Result<SimSpec> {
        let n = self.n_nodes;
        if n == 0 {
            return Err(Error::InvalidInput("n_nodes must be positive".into()));
        }
        let alpha = self.coefficients.alpha.resolve(n, "alpha")?;
        let resolve_beta = |b: &Option<Broadcast<Vec<f64>>>, what: &str| -> Result<Vec<Vec<f64>>> {
            match b {
                None => Ok(vec![Vec::new(); n]),
                Some(b) => b.resolve(n, what),
            }
        };
        let beta_d = resolve_beta(&self.coefficients.beta_d, "beta_d")?;
        let beta_w = resolve_beta(&self.coefficients.beta_w, "beta_w")?;
        let beta_m = resolve_beta(&self.coefficients.beta_m, "beta_m")?;
        let mut lambda_per_node: Vec<Vec<Vec<(usize, f64)>>> = vec![Vec::new(); n];
        let mut exog = Vec::new();
        for e in &self.exog {
            let coefs = e.coefs.resolve(n, &format!("coefs for {}", e.name))?;
            for (i, node_coefs) in coefs.iter().enumerate() {
                if node_coefs.len() != e.lags.len() {
                    return Err(Error::InvalidInput(format!(
                        "exogenous {}: {} coefficients for {} lags",
                        e.name,
                        node_coefs.len(),
                        e.lags.len()
                    )));
                }
                lambda_per_node[i]
                    .push(e.lags.iter().copied().zip(node_coefs.iter().copied()).collect());
            }
            exog.push(ExogProcess {
                name: e.name.clone(),
                ar: e.ar,
                noise_std: e.noise_std,
            });
        }
        let nodes = (0..n)
            .map(|i| NodeCoefficients {
                alpha: alpha[i],
                beta_d: beta_d[i].clone(),
                beta_w: beta_w[i].clone(),
                beta_m: beta_m[i].clone(),
                lambda: lambda_per_node[i].clone(),
            })
            .collect();
        Ok(SimSpec {
            network: self.network.build(n)?,
            t_len: self.t_len,
            burn_in: self.burn_in,
            coefficients: SimCoefficients { nodes },
            noise_std: self.noise_std.resolve(n, "noise_std")?,
            exog,
            seed: seed_override.unwrap_or(self.seed),
            start_date: self.start_date.clone(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestData {
    pub log_rv: PathBuf,
    #[serde(default)]
    pub returns: Option<PathBuf>,
    #[serde(default)]
    pub exog: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub label: String,
    pub variant: Variant,
    pub stages: [usize; 3],
    #[serde(default)]
    pub exog: Vec<ExogSpec>,
    /// Overrides the run-level rolling defaults for this model only.
    #[serde(default)]
    pub network_mode: Option<NetworkMode>,
    #[serde(default)]
    pub glasso_rho: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub data: BacktestData,
    #[serde(default = "default_rolling")]
    pub rolling: RollingConfig,
    pub models: Vec<ModelConfig>,
}

fn default_rolling() -> RollingConfig {
    RollingConfig::default()
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::InvalidInput("no models configured".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.models {
            if m.label.is_empty() || m.label.contains(['/', '\\']) {
                return Err(Error::InvalidInput(format!(
                    "model label {:?} is empty or not filesystem-safe",
                    m.label
                )));
            }
            if !seen.insert(&m.label) {
                return Err(Error::InvalidInput(format!(
                    "duplicate model label {}",
                    m.label
                )));
            }
        }
        Ok(())
    }

    pub fn rolling_for(&self, model: &ModelConfig) -> RollingConfig {
        let mut rolling = self.rolling.clone();
        if let Some(mode) = model.network_mode {
            rolling.network_mode = mode;
        }
        if let Some(rho) = model.glasso_rho {
            rolling.glasso_rho = Some(rho);
        }
        rolling
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateEntry {
    pub label: String,
    pub forecasts: PathBuf,
    #[serde(default)]
    pub n_params: usize,
    #[serde(default)]
    pub variant: String,
    #[serde(default)]
    pub network: String,
    #[serde(default)]
    pub exogenous: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateConfig {
    pub entries: Vec<EvaluateEntry>,
}
