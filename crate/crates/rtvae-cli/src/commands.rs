//! The five commands: ingest, train, score, gridsearch, experiment.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rtvae_core::data::{
    encode, fit_encoder, ingest_csv, parse_schema, read_cache, write_cache, Label, RawTable,
};
use rtvae_core::eval::{
    contamination_sweep, generate_synthetic_raw, score_dataset, write_aggregate_csv,
    write_sweep_csv, SweepData,
};
use rtvae_core::model::{Architecture, TrainedModel};
use rtvae_core::numerics::Rng;
use rtvae_core::trainer::{
    grid_search_beta, train, write_history_csv, GridSearchResult, TrainConfig, TrainHistory,
};
use rtvae_core::{data::contaminate_raw, fsio};

use crate::config::{
    apply_model_section, apply_train_section, beta_grid_from, load_config, resolve_seed,
    synthetic_spec_from, wants_grid, ConfigFile,
};

/// Errors split by exit code: usage problems exit 2, everything else 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

macro_rules! failure_from {
    ($($ty:ty),*) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Failure(e.to_string())
            }
        })*
    };
}

failure_from!(
    rtvae_core::data::DataError,
    rtvae_core::trainer::TrainError,
    rtvae_core::model::ModelError,
    rtvae_core::eval::EvalError,
    rtvae_core::eval::SweepError,
    std::io::Error
);

pub struct CommonArgs {
    pub config: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl CommonArgs {
    fn config_path(&self) -> Result<&Path, CliError> {
        self.config
            .as_deref()
            .ok_or_else(|| CliError::Usage("--config is required for this command".into()))
    }

    fn out_dir(&self, config: &ConfigFile) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| config.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

pub fn cmd_ingest(
    csv: &Path,
    schema_path: &Path,
    out: &Path,
    header: bool,
    encoder_from: Option<&Path>,
) -> Result<(), CliError> {
    let schema_text = std::fs::read_to_string(schema_path).map_err(|e| {
        CliError::Failure(format!("cannot read schema {}: {e}", schema_path.display()))
    })?;
    let schema = parse_schema(&schema_text)
        .map_err(|e| CliError::Failure(format!("schema {}: {e}", schema_path.display())))?;
    let table = ingest_csv(csv, &schema, header)
        .map_err(|e| CliError::Failure(format!("csv {}: {e}", csv.display())))?;

    let state = match encoder_from {
        Some(model_path) => {
            TrainedModel::load(model_path)
                .map_err(|e| CliError::Failure(format!("model {}: {e}", model_path.display())))?
                .encoder_state
        }
        None => fit_encoder(&table)?,
    };
    let ds = encode(&table, &state)?;
    write_cache(out, &ds)?;
    println!(
        "ingested {} rows x {} columns ({} encoded) -> {} (fingerprint {})",
        ds.n_rows(),
        schema.columns.len(),
        ds.width(),
        out.display(),
        ds.fingerprint
    );
    Ok(())
}

struct TrainData {
    ds: rtvae_core::EncodedDataset,
    encoder: rtvae_core::EncoderState,
}

/// Training data per the config's `[data]` section.
fn build_training_data(config: &ConfigFile, seed: u64) -> Result<TrainData, CliError> {
    let data = config
        .data
        .as_ref()
        .ok_or_else(|| CliError::Failure("config is missing the [data] section".into()))?;
    match data.source.as_str() {
        "csv" => {
            let csv = data
                .csv
                .as_ref()
                .ok_or_else(|| CliError::Failure("data.source = \"csv\" needs data.csv".into()))?;
            let schema_path = data.schema.as_ref().ok_or_else(|| {
                CliError::Failure("data.source = \"csv\" needs data.schema".into())
            })?;
            let schema_text = std::fs::read_to_string(schema_path).map_err(|e| {
                CliError::Failure(format!("cannot read schema {}: {e}", schema_path.display()))
            })?;
            let schema = parse_schema(&schema_text)
                .map_err(|e| CliError::Failure(format!("schema {}: {e}", schema_path.display())))?;
            let table = ingest_csv(csv, &schema, data.header)
                .map_err(|e| CliError::Failure(format!("csv {}: {e}", csv.display())))?;
            let encoder = fit_encoder(&table)?;
            Ok(TrainData {
                ds: encode(&table, &encoder)?,
                encoder,
            })
        }
        "synthetic" => {
            let spec = synthetic_spec_from(data.synthetic.as_ref());
            let rate = data
                .synthetic
                .as_ref()
                .and_then(|s| s.contamination)
                .unwrap_or(0.0);
            let mut rng = Rng::new(seed);
            let normals =
                generate_synthetic_raw(&spec, Label::Normal, spec.train_normals, &mut rng)?;
            let anomalies =
                generate_synthetic_raw(&spec, Label::Anomaly, spec.train_anomalies, &mut rng)?;
            let mixed = contaminate_raw(&normals, &anomalies, rate, spec.train_normals, &mut rng)?;
            let encoder = fit_encoder(&mixed)?;
            Ok(TrainData {
                ds: encode(&mixed, &encoder)?,
                encoder,
            })
        }
        other => Err(CliError::Failure(format!(
            "data.source {other:?} (expected \"csv\" or \"synthetic\")"
        ))),
    }
}

fn train_config_from(
    config: &ConfigFile,
    layout: Vec<rtvae_core::data::FeatureColumn>,
    width: usize,
    seed: u64,
) -> Result<TrainConfig, CliError> {
    let mut arch = Architecture::defaults(layout);
    arch.input_width = width;
    apply_model_section(&mut arch, config.model.as_ref())?;
    let mut train_cfg = TrainConfig::new(arch, seed);
    apply_train_section(&mut train_cfg, config.train.as_ref())?;
    Ok(train_cfg)
}

fn describe_history(history: &TrainHistory) -> String {
    match (
        history.best_epoch,
        history.best_val_auc,
        history.best_val_metric,
    ) {
        (Some(epoch), Some(auc), _) => {
            format!("best hold-out AUC {auc:.6} at epoch {epoch}")
        }
        (Some(epoch), None, Some(metric)) => {
            format!("best hold-out loss {:.6} at epoch {epoch}", -metric)
        }
        _ => "no epochs ran".to_string(),
    }
}

pub fn cmd_train(args: &CommonArgs, force_grid: bool) -> Result<(), CliError> {
    let config = load_config(args.config_path()?)?;
    let seed = resolve_seed(args.seed, &config)?;
    let out_dir = args.out_dir(&config);

    let TrainData { ds, encoder } = build_training_data(&config, seed)?;
    let train_cfg = train_config_from(&config, ds.layout.clone(), ds.width(), seed)?;
    let use_grid = force_grid || wants_grid(config.train.as_ref())?;

    let (params, history, beta) = if use_grid {
        let grid = beta_grid_from(config.sweep.as_ref())?;
        let result = grid_search_beta(&ds, &train_cfg, &grid)?;
        write_gridsearch_csv(&out_dir.join("gridsearch.csv"), &result)?;
        println!("grid selected beta = {}", result.best_beta.value());
        (result.model, result.history, result.best_beta)
    } else {
        let (params, history) = train(&ds, &train_cfg)?;
        (params, history, train_cfg.beta)
    };

    let model = TrainedModel {
        params,
        encoder_state: encoder,
        fingerprint: ds.fingerprint.clone(),
        beta: beta.value(),
        seed,
    };
    model.save(out_dir.join("model.json"))?;
    write_history_csv(out_dir.join("history.csv"), &history)?;
    println!(
        "trained beta = {} ({}); model -> {}",
        beta.value(),
        describe_history(&history),
        out_dir.join("model.json").display()
    );
    Ok(())
}

fn write_gridsearch_csv(path: &Path, result: &GridSearchResult) -> Result<(), CliError> {
    // val_auc is nan for single-class hold-outs; selection_score is what the
    // search maximized (AUC, or the negated hold-out loss as the fallback)
    let mut out = String::from("beta,val_auc,selection_score,best_epoch\n");
    for row in &result.table {
        let auc = row
            .val_auc
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "nan".into());
        let _ = writeln!(
            out,
            "{},{},{:.6},{}",
            row.beta, auc, row.val_metric, row.best_epoch
        );
    }
    fsio::write_atomic(path, out.as_bytes())?;
    Ok(())
}

pub fn cmd_score(model_path: &Path, data_path: &Path, out: &Path) -> Result<(), CliError> {
    let model = TrainedModel::load(model_path)
        .map_err(|e| CliError::Failure(format!("model {}: {e}", model_path.display())))?;
    let ds = read_cache(data_path)
        .map_err(|e| CliError::Failure(format!("data {}: {e}", data_path.display())))?;
    let scores = score_dataset(&model, &ds)?;

    let mut csv = String::from("row_index,score\n");
    for (i, score) in scores.iter().enumerate() {
        let _ = writeln!(csv, "{i},{score:.6}");
    }
    fsio::write_atomic(out, csv.as_bytes())?;
    println!("scored {} rows -> {}", scores.len(), out.display());
    Ok(())
}

pub fn cmd_experiment(args: &CommonArgs) -> Result<(), CliError> {
    let config = load_config(args.config_path()?)?;
    let seed = resolve_seed(args.seed, &config)?;
    let out_dir = args.out_dir(&config);

    let sweep_config = crate::config::build_sweep_config(&config, seed)?;
    let data = experiment_data(&config)?;
    let outcome = contamination_sweep(&sweep_config, &data)?;

    write_sweep_csv(out_dir.join("sweep.csv"), &outcome)?;
    write_aggregate_csv(out_dir.join("sweep_aggregate.csv"), &outcome)?;
    for cell in &outcome.cells {
        let row = &cell.row;
        let name = format!("rate{}_{}_seed{}.json", row.rate, row.variant, row.seed);
        cell.model.save(out_dir.join("models").join(name))?;
    }

    println!("rate,variant,mean_auc,min_auc,max_auc");
    for agg in outcome.aggregates() {
        println!(
            "{},{},{:.6},{:.6},{:.6}",
            agg.rate, agg.variant, agg.mean_auc, agg.min_auc, agg.max_auc
        );
    }
    println!(
        "sweep -> {} ({} cells)",
        out_dir.join("sweep.csv").display(),
        outcome.cells.len()
    );
    Ok(())
}

fn experiment_data(config: &ConfigFile) -> Result<SweepData, CliError> {
    let data = config
        .data
        .as_ref()
        .ok_or_else(|| CliError::Failure("config is missing the [data] section".into()))?;
    match data.source.as_str() {
        "synthetic" => Ok(SweepData::Synthetic(synthetic_spec_from(
            data.synthetic.as_ref(),
        ))),
        "csv" => {
            let csv = data
                .csv
                .as_ref()
                .ok_or_else(|| CliError::Failure("data.source = \"csv\" needs data.csv".into()))?;
            let schema_path = data.schema.as_ref().ok_or_else(|| {
                CliError::Failure("data.source = \"csv\" needs data.schema".into())
            })?;
            let schema_text = std::fs::read_to_string(schema_path).map_err(|e| {
                CliError::Failure(format!("cannot read schema {}: {e}", schema_path.display()))
            })?;
            let schema = parse_schema(&schema_text)
                .map_err(|e| CliError::Failure(format!("schema {}: {e}", schema_path.display())))?;
            let table = ingest_csv(csv, &schema, data.header)
                .map_err(|e| CliError::Failure(format!("csv {}: {e}", csv.display())))?;
            let labels = table.labels.clone().ok_or_else(|| {
                CliError::Failure(
                    "experiment on csv data needs a schema with a [label] section".into(),
                )
            })?;
            let (mut normal_rows, mut anomaly_rows) = (Vec::new(), Vec::new());
            for (row, label) in table.rows.iter().zip(&labels) {
                match label {
                    Label::Normal => normal_rows.push(row.clone()),
                    Label::Anomaly => anomaly_rows.push(row.clone()),
                }
            }
            let normals = RawTable {
                schema: table.schema.clone(),
                labels: Some(vec![Label::Normal; normal_rows.len()]),
                rows: normal_rows,
            };
            let anomalies = RawTable {
                schema: table.schema.clone(),
                labels: Some(vec![Label::Anomaly; anomaly_rows.len()]),
                rows: anomaly_rows,
            };
            Ok(SweepData::Labeled { normals, anomalies })
        }
        other => Err(CliError::Failure(format!(
            "data.source {other:?} (expected \"csv\" or \"synthetic\")"
        ))),
    }
}
