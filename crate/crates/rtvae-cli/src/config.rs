//! Experiment configuration: a TOML document merged over per-command
//! defaults. `train`/`gridsearch` default to the general model settings;
//! `experiment` defaults to the synthetic-sweep settings.

use serde::Deserialize;
use std::path::{Path, PathBuf};

use rtvae_core::divergences::{default_beta_grid, Beta};
use rtvae_core::eval::{
    BetaSelection, CategoricalSpec, ContinuousSpec, SweepConfig, SyntheticSpec,
};
use rtvae_core::model::{Architecture, HeadKind};
use rtvae_core::trainer::{TrainConfig, ValidationMetric};

use crate::commands::CliError;

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub data: Option<DataSection>,
    pub model: Option<ModelSection>,
    pub train: Option<TrainSection>,
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: String,
    pub csv: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    #[serde(default)]
    pub header: bool,
    pub synthetic: Option<SyntheticSection>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub train_normals: Option<usize>,
    pub train_anomalies: Option<usize>,
    /// Contamination rate applied when `train`/`gridsearch` build their
    /// training set from the pools.
    pub contamination: Option<f64>,
    pub continuous: Option<Vec<ContinuousSection>>,
    pub categorical: Option<Vec<CategoricalSection>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousSection {
    pub normal_mean: f64,
    pub normal_std: f64,
    pub anomaly_mean: f64,
    pub anomaly_std: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoricalSection {
    pub normal_probs: Vec<f64>,
    pub anomaly_probs: Vec<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub encoder_hidden: Option<Vec<usize>>,
    pub latent_dim: Option<usize>,
    pub decoder_hidden: Option<Vec<usize>>,
    pub continuous_head: Option<String>,
    pub obs_sigma: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub beta: Option<BetaField>,
    pub learning_rate: Option<f64>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub adam_epsilon: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub holdout_fraction: Option<f64>,
    pub validation: Option<String>,
}

/// `beta = 0.01` or `beta = "grid"`.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum BetaField {
    Fixed(f64),
    Named(String),
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub rates: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
    pub train_total: Option<usize>,
    pub test_normals: Option<usize>,
    pub test_anomalies: Option<usize>,
    pub beta_grid: Option<Vec<f64>>,
}

pub fn load_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Failure(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Failure(format!("config {}: {e}", path.display())))
}

/// Resolved seed: command line > `RTVAE_SEED` > config > 0.
pub fn resolve_seed(cli_seed: Option<u64>, config: &ConfigFile) -> Result<u64, CliError> {
    if let Some(seed) = cli_seed {
        return Ok(seed);
    }
    if let Ok(value) = std::env::var("RTVAE_SEED") {
        return value
            .parse()
            .map_err(|_| CliError::Failure(format!("RTVAE_SEED {value:?} is not an integer")));
    }
    Ok(config.seed.unwrap_or(0))
}

fn parse_head(name: &str) -> Result<HeadKind, CliError> {
    match name {
        "tanh" => Ok(HeadKind::Tanh),
        "linear" => Ok(HeadKind::Linear),
        other => Err(CliError::Failure(format!(
            "continuous_head {other:?} (expected \"tanh\" or \"linear\")"
        ))),
    }
}

fn parse_validation(name: &str) -> Result<ValidationMetric, CliError> {
    match name {
        "auto" => Ok(ValidationMetric::Auto),
        "auc" => Ok(ValidationMetric::Auc),
        "loss" => Ok(ValidationMetric::HoldoutLoss),
        other => Err(CliError::Failure(format!(
            "validation {other:?} (expected \"auto\", \"auc\" or \"loss\")"
        ))),
    }
}

pub fn apply_model_section(
    arch: &mut Architecture,
    section: Option<&ModelSection>,
) -> Result<(), CliError> {
    let Some(section) = section else {
        return Ok(());
    };
    if let Some(hidden) = &section.encoder_hidden {
        arch.encoder_hidden = hidden.clone();
    }
    if let Some(latent) = section.latent_dim {
        arch.latent_dim = latent;
    }
    if let Some(hidden) = &section.decoder_hidden {
        arch.decoder_hidden = hidden.clone();
    }
    if let Some(head) = &section.continuous_head {
        arch.continuous_head = parse_head(head)?;
    }
    if let Some(sigma) = section.obs_sigma {
        arch.obs_sigma = sigma;
    }
    Ok(())
}

pub fn apply_train_section(
    train: &mut TrainConfig,
    section: Option<&TrainSection>,
) -> Result<(), CliError> {
    let Some(section) = section else {
        return Ok(());
    };
    if let Some(BetaField::Fixed(v)) = &section.beta {
        train.beta = Beta::new(*v).map_err(|e| CliError::Failure(format!("train.beta: {e}")))?;
    }
    if let Some(v) = section.learning_rate {
        train.learning_rate = v;
    }
    if let Some(v) = section.adam_beta1 {
        train.adam_beta1 = v;
    }
    if let Some(v) = section.adam_beta2 {
        train.adam_beta2 = v;
    }
    if let Some(v) = section.adam_epsilon {
        train.adam_epsilon = v;
    }
    if let Some(v) = section.batch_size {
        train.batch_size = v;
    }
    if let Some(v) = section.max_epochs {
        train.max_epochs = v;
    }
    if let Some(v) = section.patience {
        train.patience = v;
    }
    if let Some(v) = section.holdout_fraction {
        train.holdout_fraction = v;
    }
    if let Some(v) = &section.validation {
        train.validation = parse_validation(v)?;
    }
    Ok(())
}

/// True when `beta = "grid"`, an error for any other string.
pub fn wants_grid(section: Option<&TrainSection>) -> Result<bool, CliError> {
    match section.and_then(|s| s.beta.as_ref()) {
        Some(BetaField::Named(name)) if name == "grid" => Ok(true),
        Some(BetaField::Named(name)) => Err(CliError::Failure(format!(
            "train.beta {name:?} (expected a number or \"grid\")"
        ))),
        _ => Ok(false),
    }
}

pub fn beta_grid_from(section: Option<&SweepSection>) -> Result<Vec<Beta>, CliError> {
    match section.and_then(|s| s.beta_grid.as_ref()) {
        Some(values) => values
            .iter()
            .map(|&v| Beta::new(v).map_err(|e| CliError::Failure(format!("sweep.beta_grid: {e}"))))
            .collect(),
        None => Ok(default_beta_grid()),
    }
}

pub fn synthetic_spec_from(section: Option<&SyntheticSection>) -> SyntheticSpec {
    let mut spec = SyntheticSpec::default();
    let Some(section) = section else {
        return spec;
    };
    if let Some(n) = section.train_normals {
        spec.train_normals = n;
    }
    if let Some(n) = section.train_anomalies {
        spec.train_anomalies = n;
    }
    if let Some(cont) = &section.continuous {
        spec.continuous = cont
            .iter()
            .map(|c| ContinuousSpec {
                normal_mean: c.normal_mean,
                normal_std: c.normal_std,
                anomaly_mean: c.anomaly_mean,
                anomaly_std: c.anomaly_std,
            })
            .collect();
    }
    if let Some(cat) = &section.categorical {
        spec.categorical = cat
            .iter()
            .map(|c| CategoricalSpec {
                normal_probs: c.normal_probs.clone(),
                anomaly_probs: c.anomaly_probs.clone(),
            })
            .collect();
    }
    spec
}

/// Sweep configuration for `experiment`: synthetic-sweep defaults, then the
/// config's model/train/sweep overrides.
pub fn build_sweep_config(config: &ConfigFile, seed: u64) -> Result<SweepConfig, CliError> {
    let mut sweep = SweepConfig::synthetic_defaults();
    apply_model_section(&mut sweep.train.architecture, config.model.as_ref())?;
    apply_train_section(&mut sweep.train, config.train.as_ref())?;
    sweep.train.seed = seed;

    if let Some(section) = &config.sweep {
        if let Some(rates) = &section.rates {
            sweep.rates = rates.clone();
        }
        if let Some(seeds) = &section.seeds {
            sweep.seeds = seeds.clone();
        }
        if let Some(n) = section.train_total {
            sweep.train_total = n;
        }
        if let Some(n) = section.test_normals {
            sweep.test_normals = n;
        }
        if let Some(n) = section.test_anomalies {
            sweep.test_anomalies = n;
        }
    }
    sweep.beta = match wants_grid(config.train.as_ref())? {
        true => BetaSelection::Grid(beta_grid_from(config.sweep.as_ref())?),
        false => match config.train.as_ref().and_then(|t| t.beta.as_ref()) {
            Some(BetaField::Fixed(v)) => BetaSelection::Fixed(
                Beta::new(*v).map_err(|e| CliError::Failure(format!("train.beta: {e}")))?,
            ),
            // the robust variant defaults to grid selection
            _ => BetaSelection::Grid(beta_grid_from(config.sweep.as_ref())?),
        },
    };
    Ok(sweep)
}
