//! Experiment configuration, read from JSON or `key = value` (TOML) files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::reference;
use crate::graph::{self, NetworkBackbone, RandomModel};
use crate::predictor::PredictorConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid key=value config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("no topology configured")]
    MissingTopology,
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
}

/// Where the communication graph comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum Topology {
    /// The five-agent case-study graph.
    Reference,
    /// Adjacency CSV (`.csv`) or JSON edge list (anything else).
    File { path: PathBuf },
    Random {
        #[serde(flatten)]
        model: RandomModel,
        n: usize,
    },
}

impl Topology {
    pub fn load(&self, seed: u64) -> Result<NetworkBackbone, ConfigError> {
        match self {
            Topology::Reference => Ok(graph::reference_topology()),
            Topology::File { path } => {
                let text = read(path)?;
                let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
                if is_csv {
                    Ok(graph::from_csv(&text)?)
                } else {
                    let doc: graph::AdjacencyJson = serde_json::from_str(&text)?;
                    Ok(graph::from_json(&doc)?)
                }
            }
            Topology::Random { model, n } => Ok(graph::generate_random(*model, *n, seed)?),
        }
    }
}

/// Ensemble sizing and model list for `bench`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub models: Vec<RandomModel>,
    pub agents: usize,
    pub networks: usize,
    /// Initial states are drawn uniformly from this range, every order.
    pub init_range: [f64; 2],
    /// ω is multiplied by this factor until the closed loop converges.
    pub omega_shrink: f64,
    pub max_shrink_steps: usize,
    pub max_resamples: u32,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            models: vec![
                RandomModel::Er { rho: 0.2 },
                RandomModel::Er { rho: 0.4 },
                RandomModel::Ws { z: 6, rewire: 0.3 },
                RandomModel::Ws { z: 8, rewire: 0.3 },
                RandomModel::Ba { m: 6 },
                RandomModel::Ba { m: 9 },
            ],
            agents: 20,
            networks: 100,
            init_range: [0.0, 30.0],
            omega_shrink: 0.8,
            max_shrink_steps: 40,
            max_resamples: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub trajectory: Option<PathBuf>,
    pub spectral: Option<PathBuf>,
    pub prediction: Option<PathBuf>,
    pub residuals: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub s: usize,
    pub eps: f64,
    pub omega: f64,
    pub gains: Vec<f64>,
    pub topology: Option<Topology>,
    /// Explicit initial state (order-major, length `s·n`); random if absent.
    pub x0: Option<Vec<f64>>,
    pub horizon: usize,
    pub sigma: f64,
    pub seed: u64,
    /// Observed agents (zero-based) for `predict`.
    pub agents: Vec<usize>,
    /// Samples checked by the deadbeat residual table.
    pub residual_horizon: usize,
    pub predictor: PredictorConfig,
    pub ensemble: EnsembleConfig,
    pub outputs: OutputPaths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            s: reference::ORDER,
            eps: reference::EPS,
            omega: reference::OMEGA,
            gains: reference::GAINS.to_vec(),
            topology: None,
            x0: None,
            horizon: 3000,
            sigma: 0.1,
            seed: 0,
            agents: vec![0],
            residual_horizon: 200,
            predictor: PredictorConfig::default(),
            ensemble: EnsembleConfig::default(),
            outputs: OutputPaths::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses JSON when the text starts with `{`, TOML otherwise.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&read(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.s == 0 {
            return bad("s must be at least 1".into());
        }
        if self.gains.len() != self.s {
            return bad(format!("{} gains given for order {}", self.gains.len(), self.s));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.predictor.rank_tol > 0.0 && self.predictor.rank_tol < 1.0) {
            return bad(format!("rank_tol must lie in (0, 1), got {}", self.predictor.rank_tol));
        }
        let e = &self.ensemble;
        if !(e.omega_shrink > 0.0 && e.omega_shrink < 1.0) {
            return bad(format!("omega_shrink must lie in (0, 1), got {}", e.omega_shrink));
        }
        if e.init_range[0] > e.init_range[1] {
            return bad("init_range must be ascending".into());
        }
        Ok(())
    }

    pub fn backbone(&self) -> Result<NetworkBackbone, ConfigError> {
        self.topology
            .as_ref()
            .ok_or(ConfigError::MissingTopology)?
            .load(self.seed)
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })
}
