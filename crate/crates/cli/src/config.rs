//! Per-command configuration files.
//!
//! A config file is flat TOML whose keys are the long flag names with `-`
//! replaced by `_`. Values are resolved as: command-line flag, then config
//! file, then the built-in default. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchCosineConfig {
    pub spec: String,
    pub estimators: Vec<String>,
    #[serde(rename = "S")]
    pub samples: Vec<usize>,
    pub seed: Option<u64>,
    pub seeds: usize,
    pub noise: String,
    pub eta: f64,
    pub target: f64,
    pub warmup_steps: usize,
    pub warmup_samples: usize,
    pub timing: bool,
    pub out: PathBuf,
}

impl Default for BenchCosineConfig {
    fn default() -> Self {
        BenchCosineConfig {
            spec: "categorical:50".into(),
            estimators: [
                "sfe",
                "ste",
                "gumbel-softmax",
                "imle-forward:1",
                "imle-central:1",
                "aimle-central",
            ]
            .map(String::from)
            .to_vec(),
            samples: vec![1, 10, 100, 1_000, 10_000, 100_000],
            seed: None,
            seeds: 32,
            noise: "gumbel:1".into(),
            eta: 1e-3,
            target: 1.0,
            warmup_steps: 2_000,
            warmup_samples: 1_000,
            timing: false,
            out: "bench_cosine.csv".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepLambdaConfig {
    pub spec: String,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_points: usize,
    #[serde(rename = "S")]
    pub samples: usize,
    pub mode: String,
    pub seed: Option<u64>,
    pub seeds: usize,
    pub noise: String,
    pub eta: f64,
    pub target: f64,
    pub warmup_steps: usize,
    pub baselines: bool,
    pub timing: bool,
    pub out: PathBuf,
}

impl Default for SweepLambdaConfig {
    fn default() -> Self {
        SweepLambdaConfig {
            spec: "categorical:50".into(),
            lambda_min: 0.0,
            lambda_max: 5.0,
            lambda_points: 11,
            samples: 1_000,
            mode: "central".into(),
            seed: None,
            seeds: 32,
            noise: "gumbel:1".into(),
            eta: 1e-3,
            target: 1.0,
            warmup_steps: 2_000,
            baselines: false,
            timing: false,
            out: "sweep_lambda.csv".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeToyConfig {
    pub spec: String,
    pub estimator: String,
    #[serde(rename = "S")]
    pub samples: usize,
    pub steps: usize,
    pub optimizer: String,
    pub lr: f64,
    pub seed: Option<u64>,
    pub noise: String,
    pub alpha: f64,
    pub eta: f64,
    pub target: f64,
    pub resume: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for OptimizeToyConfig {
    fn default() -> Self {
        OptimizeToyConfig {
            spec: "categorical:20".into(),
            estimator: "aimle-central".into(),
            samples: 1,
            steps: 5_000,
            optimizer: "adam".into(),
            lr: 1e-3,
            seed: None,
            noise: "gumbel:1".into(),
            alpha: 0.0,
            eta: 1e-3,
            target: 1.0,
            resume: None,
            checkpoint: None,
            out: "optimize_toy.csv".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasEnumConfig {
    pub spec: String,
    pub lambdas: Vec<f64>,
    pub seed: Option<u64>,
    pub seeds: usize,
    pub out: PathBuf,
}

impl Default for BiasEnumConfig {
    fn default() -> Self {
        BiasEnumConfig {
            spec: "categorical:3".into(),
            lambdas: vec![1.0, 0.1, 0.01],
            seed: None,
            seeds: 1,
            out: "bias_enum.csv".into(),
        }
    }
}
