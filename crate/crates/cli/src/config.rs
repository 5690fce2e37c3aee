use std::fs;
use std::path::{Path, PathBuf};

use lcvb_core::experiment::{path_demand, DEFAULT_SEED};
use lcvb_core::oracle::DEFAULT_NODE_COUNT;
use lcvb_core::{ActionInterval, NewsvendorModel, Observations};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Parse a JSON file strictly; errors name the offending key path.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        if key == "." {
            CliError::Config(format!("{}: {}", path.display(), e.inner()))
        } else {
            CliError::Config(format!("{}: key `{key}`: {}", path.display(), e.inner()))
        }
    })
}

/// Model and data source for `fit` and `decide`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Known true rate; always known for synthetic data.
    pub theta0: Option<f64>,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub h: f64,
    pub action_interval: ActionInterval,
    pub node_count: usize,
    /// Synthetic sample size when no values are given.
    pub n: usize,
    pub master_seed: u64,
    pub values: Option<Vec<f64>>,
    pub data_file: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            theta0: None,
            b: 0.1,
            alpha: 1.0,
            beta: 4.1,
            h: 0.005,
            action_interval: ActionInterval::DEFAULT,
            node_count: DEFAULT_NODE_COUNT,
            n: 1000,
            master_seed: DEFAULT_SEED,
            values: None,
            data_file: None,
        }
    }
}

pub const DEFAULT_THETA0: f64 = 0.68;

pub struct ResolvedData {
    pub data: Observations,
    pub model: NewsvendorModel,
    /// Whether `model.theta0` is the data-generating rate.
    pub theta0_known: bool,
    pub source: String,
}

impl DataConfig {
    pub fn resolve(&self) -> Result<ResolvedData, CliError> {
        if self.values.is_some() && self.data_file.is_some() {
            return Err(CliError::Config("give either `values` or `data_file`, not both".into()));
        }
        let theta0 = self.theta0.unwrap_or(DEFAULT_THETA0);
        let model = NewsvendorModel::new(self.h, self.b, theta0, self.alpha, self.beta, self.action_interval)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let config_err = |e: lcvb_core::Error| CliError::Config(e.to_string());
        let (data, source, synthetic) = if let Some(v) = &self.values {
            (Observations::new(v.clone()).map_err(config_err)?, "inline values".to_string(), false)
        } else if let Some(path) = &self.data_file {
            (read_data_file(path)?, path.display().to_string(), false)
        } else {
            if self.n == 0 {
                return Err(CliError::Config("synthetic sample size `n` must be at least 1".into()));
            }
            let data = path_demand(theta0, self.n, self.master_seed).map_err(config_err)?;
            let source = format!("synthetic exponential(theta0 = {theta0}), n = {}, seed = {}", self.n, self.master_seed);
            (data, source, true)
        };
        Ok(ResolvedData {
            data,
            model,
            theta0_known: synthetic || self.theta0.is_some(),
            source,
        })
    }
}

/// Numbers separated by whitespace or commas; `#` starts a comment.
pub fn read_data_file(path: &Path) -> Result<Observations, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let v = tok.parse::<f64>().map_err(|e| {
                CliError::Config(format!("{}: line {}: `{tok}`: {e}", path.display(), i + 1))
            })?;
            values.push(v);
        }
    }
    Observations::new(values).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Options for the identity suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub master_seed: u64,
    pub sample_size: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        let d = lcvb_core::checks::SuiteOptions::default();
        Self {
            master_seed: d.seed,
            sample_size: d.sample_size,
        }
    }
}
