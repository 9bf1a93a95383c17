//! JSON run configuration with environment overrides.
//!
//! Any key can be overridden through a `POIKIT_` variable whose remaining name
//! is the key path joined by `__`, e.g. `POIKIT_ESTIMATE__DETECTOR__THRESHOLD_A=2`.
//! Values are parsed as JSON when possible and taken as strings otherwise.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{PoiError, Result};
use crate::glm::LinkSpec;
use crate::harness::{DgpChoice, ExperimentSpec};
use crate::nw::KernelConfig;
use crate::poi::PoiConfig;
use crate::selection::SelectionLimits;
use crate::sim::SamplingMethod;

pub const ENV_PREFIX: &str = "POIKIT_";

fn default_domain() -> [f64; 2] {
    [0.0, 1.0]
}

fn default_sampling() -> SamplingMethod {
    SamplingMethod::Auto
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub dgp: DgpChoice,
    pub n: usize,
    pub p: usize,
    #[serde(default = "default_domain")]
    pub domain: [f64; 2],
    #[serde(default = "default_sampling")]
    pub sampling: SamplingMethod,
}

/// Curves and responses on an equidistant grid over `domain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataInput {
    pub curves: PathBuf,
    pub responses: PathBuf,
    #[serde(default = "default_domain")]
    pub domain: [f64; 2],
    /// Center and scale every grid point before estimation.
    #[serde(default)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorChoice {
    Trh,
    Poi,
    #[default]
    Both,
}

impl EstimatorChoice {
    pub fn trh(&self) -> bool {
        matches!(self, EstimatorChoice::Trh | EstimatorChoice::Both)
    }
    pub fn poi(&self) -> bool {
        matches!(self, EstimatorChoice::Poi | EstimatorChoice::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub input: DataInput,
    #[serde(default)]
    pub estimator: EstimatorChoice,
    #[serde(default)]
    pub detector: PoiConfig,
    /// Lags for the BIC search; the default log-spaced grid when absent.
    #[serde(default)]
    pub k_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub selection: SelectionLimits,
    #[serde(default)]
    pub link: LinkSpec,
    /// Fit kernel regression on the selected points when present.
    #[serde(default)]
    pub kernel: Option<KernelConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub input: DataInput,
    #[serde(default)]
    pub detector: PoiConfig,
    #[serde(default)]
    pub k_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub selection: SelectionLimits,
    #[serde(default)]
    pub link: LinkSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub estimate: Option<EstimateConfig>,
    #[serde(default)]
    pub benchmark: Option<ExperimentSpec>,
    #[serde(default)]
    pub analyze: Option<AnalyzeConfig>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| PoiError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Reads `path` (an empty config when `None`) and applies environment overrides.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| PoiError::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| PoiError::Config(format!("{}: {e}", p.display())))?
            }
            None => Value::Object(Map::new()),
        };
        apply_env_overrides(&mut value, env)?;
        serde_json::from_value(value).map_err(|e| PoiError::Config(e.to_string()))
    }
}

/// Applies every `POIKIT_A__B=v` pair as `value["a"]["b"] = v`.
pub fn apply_env_overrides(value: &mut Value, env: impl IntoIterator<Item = (String, String)>) -> Result<()> {
    let mut pairs: Vec<(String, String)> = env
        .into_iter()
        .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|rest| (rest.to_lowercase(), v)))
        .collect();
    pairs.sort();
    for (key, raw) in pairs {
        let path: Vec<&str> = key.split("__").collect();
        if path.iter().any(|s| s.is_empty()) {
            return Err(PoiError::Config(format!("malformed override key {ENV_PREFIX}{}", key.to_uppercase())));
        }
        let parsed = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        let mut node = &mut *value;
        for seg in &path[..path.len() - 1] {
            if !node.is_object() {
                *node = Value::Object(Map::new());
            }
            node = node
                .as_object_mut()
                .expect("just made an object")
                .entry(seg.to_string())
                .or_insert_with(|| Value::Object(Map::new()));
        }
        if !node.is_object() {
            *node = Value::Object(Map::new());
        }
        node.as_object_mut()
            .expect("just made an object")
            .insert(path[path.len() - 1].to_string(), parsed);
    }
    Ok(())
}
