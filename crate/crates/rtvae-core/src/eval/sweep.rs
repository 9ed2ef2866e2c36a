//! Contamination sweep: for each rate, train a vanilla VAE (beta = 0) and a
//! robust model (fixed or grid-selected beta) on a contaminated training set,
//! then score an untouched labeled test set.
//!
//! The raw test rows are fixed per seed. The encoder is refit on each
//! contaminated training set — as a real pipeline would be — and the test set
//! is encoded with that state at scoring time, so nothing from the test split
//! leaks into the fit.

use rayon::prelude::*;
use std::path::Path;
use thiserror::Error;

use super::synthetic::{generate_synthetic_raw, SyntheticSpec};
use super::{auc, EvalError, ScoredSet};
use crate::data::{contaminate_raw, encode, fit_encoder, Label, RawTable};
use crate::divergences::Beta;
use crate::fsio;
use crate::model::TrainedModel;
use crate::numerics::{subseed, Rng};
use crate::trainer::{grid_search_beta, train, TrainConfig, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    Vae,
    Rtvae,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Vae => write!(f, "vae"),
            Variant::Rtvae => write!(f, "rtvae"),
        }
    }
}

/// How the robust variant picks its beta.
#[derive(Debug, Clone)]
pub enum BetaSelection {
    Fixed(Beta),
    Grid(Vec<Beta>),
}

/// Data source for the sweep: a synthetic spec, or labeled raw pools split
/// out of an ingested dataset.
#[derive(Debug, Clone)]
pub enum SweepData {
    Synthetic(SyntheticSpec),
    Labeled {
        normals: RawTable,
        anomalies: RawTable,
    },
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Contaminated training sets all have exactly this many rows.
    pub train_total: usize,
    pub test_normals: usize,
    pub test_anomalies: usize,
    pub beta: BetaSelection,
    /// Training hyperparameters. The architecture's feature layout and seed
    /// are rebuilt per cell from the refit encoder.
    pub train: TrainConfig,
}

impl SweepConfig {
    /// Default sweep: rates {0, 0.01, 0.02, 0.05, 0.10}, three seeds, 5000
    /// training rows, a 1000 + 1000 test set, grid-selected beta.
    pub fn new(train: TrainConfig) -> Self {
        SweepConfig {
            rates: vec![0.0, 0.01, 0.02, 0.05, 0.10],
            seeds: vec![1, 2, 3],
            train_total: 5000,
            test_normals: 1000,
            test_anomalies: 1000,
            beta: BetaSelection::Grid(crate::divergences::default_beta_grid()),
            train,
        }
    }

    /// Defaults for the synthetic robustness experiment: a compact model
    /// (latent 2, one hidden layer of 8), linear continuous heads,
    /// observation sigma 0.2, 60 epochs, loss-based early stopping.
    ///
    /// These differ from the model defaults because the contamination effect
    /// is invisible otherwise at this scale: a tanh head saturates against
    /// z-scored outliers, AUC-based early stopping snapshots a
    /// pre-corruption epoch, at sigma 1 the robust kernel's saturation
    /// region starts beyond the outlier cluster for every beta on the grid,
    /// and an over-parameterized net fits even strongly down-weighted
    /// outliers because Adam renormalizes per-parameter gradient scale.
    pub fn synthetic_defaults() -> SweepConfig {
        let mut arch = crate::model::Architecture::defaults(vec![]);
        arch.encoder_hidden = vec![8];
        arch.decoder_hidden = vec![8];
        arch.latent_dim = 2;
        arch.continuous_head = crate::model::HeadKind::Linear;
        arch.obs_sigma = 0.2;
        let mut train = TrainConfig::new(arch, 0);
        train.max_epochs = 60;
        train.validation = crate::trainer::ValidationMetric::HoldoutLoss;
        SweepConfig::new(train)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rate: f64,
    pub beta: f64,
    pub variant: Variant,
    pub seed: u64,
    pub test_auc: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub rate: f64,
    pub variant: Variant,
    pub mean_auc: f64,
    pub min_auc: f64,
    pub max_auc: f64,
}

pub struct SweepCell {
    pub row: SweepRow,
    pub model: TrainedModel,
}

pub struct SweepOutcome {
    pub cells: Vec<SweepCell>,
}

impl std::fmt::Debug for SweepOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SweepOutcome")
            .field("rows", &self.rows())
            .finish()
    }
}

impl SweepOutcome {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.cells.iter().map(|c| c.row.clone()).collect()
    }

    /// Mean/min/max test AUC per (rate, variant), in row order.
    pub fn aggregates(&self) -> Vec<AggregateRow> {
        let mut out: Vec<AggregateRow> = Vec::new();
        for cell in &self.cells {
            let row = &cell.row;
            match out
                .iter_mut()
                .find(|a| a.rate == row.rate && a.variant == row.variant)
            {
                Some(agg) => {
                    agg.mean_auc += row.test_auc;
                    agg.min_auc = agg.min_auc.min(row.test_auc);
                    agg.max_auc = agg.max_auc.max(row.test_auc);
                }
                None => out.push(AggregateRow {
                    rate: row.rate,
                    variant: row.variant,
                    mean_auc: row.test_auc,
                    min_auc: row.test_auc,
                    max_auc: row.test_auc,
                }),
            }
        }
        let seeds = self
            .cells
            .iter()
            .map(|c| c.row.seed)
            .collect::<std::collections::BTreeSet<_>>()
            .len()
            .max(1);
        for agg in &mut out {
            agg.mean_auc /= seeds as f64;
        }
        out
    }

    pub fn mean_auc(&self, rate: f64, variant: Variant) -> Option<f64> {
        self.aggregates()
            .into_iter()
            .find(|a| a.rate == rate && a.variant == variant)
            .map(|a| a.mean_auc)
    }
}

struct SeedPools {
    seed: u64,
    train_normals: RawTable,
    injection: RawTable,
    test: RawTable,
}

fn concat_tables(a: &RawTable, b: &RawTable) -> RawTable {
    let mut rows = a.rows.clone();
    rows.extend(b.rows.iter().cloned());
    let mut labels = a.labels.clone().unwrap_or_default();
    labels.extend(b.labels.clone().unwrap_or_default());
    RawTable {
        schema: a.schema.clone(),
        rows,
        labels: Some(labels),
    }
}

fn subsample(table: &RawTable, indices: &[usize]) -> RawTable {
    RawTable {
        schema: table.schema.clone(),
        rows: indices.iter().map(|&i| table.rows[i].clone()).collect(),
        labels: table
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect()),
    }
}

fn prepare_pools(
    config: &SweepConfig,
    data: &SweepData,
    seed: u64,
) -> Result<SeedPools, EvalError> {
    let mut rng = Rng::new(subseed(seed, 0x0da7a));
    match data {
        SweepData::Synthetic(spec) => {
            let train_normals =
                generate_synthetic_raw(spec, Label::Normal, spec.train_normals, &mut rng)?;
            let injection =
                generate_synthetic_raw(spec, Label::Anomaly, spec.train_anomalies, &mut rng)?;
            let test_normals =
                generate_synthetic_raw(spec, Label::Normal, config.test_normals, &mut rng)?;
            let test_anomalies =
                generate_synthetic_raw(spec, Label::Anomaly, config.test_anomalies, &mut rng)?;
            Ok(SeedPools {
                seed,
                train_normals,
                injection,
                test: concat_tables(&test_normals, &test_anomalies),
            })
        }
        SweepData::Labeled { normals, anomalies } => {
            let max_rate = config.rates.iter().cloned().fold(0.0, f64::max);
            let injection_need = (max_rate * config.train_total as f64).ceil() as usize;

            let needed_normals = config.train_total + config.test_normals;
            let needed_anomalies = injection_need + config.test_anomalies;
            if normals.n_rows() < needed_normals {
                return Err(EvalError::Data(crate::data::DataError::InsufficientPool {
                    pool: "normal",
                    available: normals.n_rows(),
                    needed: needed_normals,
                }));
            }
            if anomalies.n_rows() < needed_anomalies {
                return Err(EvalError::Data(crate::data::DataError::InsufficientPool {
                    pool: "anomaly",
                    available: anomalies.n_rows(),
                    needed: needed_anomalies,
                }));
            }

            let mut normal_idx: Vec<usize> = (0..normals.n_rows()).collect();
            rng.shuffle(&mut normal_idx);
            let train_normals = subsample(normals, &normal_idx[..config.train_total]);
            let test_normals = subsample(
                normals,
                &normal_idx[config.train_total..config.train_total + config.test_normals],
            );

            let mut anomaly_idx: Vec<usize> = (0..anomalies.n_rows()).collect();
            rng.shuffle(&mut anomaly_idx);
            let injection = subsample(anomalies, &anomaly_idx[..injection_need.max(1)]);
            let test_anomalies = subsample(
                anomalies,
                &anomaly_idx[injection_need..injection_need + config.test_anomalies],
            );

            Ok(SeedPools {
                seed,
                train_normals,
                injection,
                test: concat_tables(&test_normals, &test_anomalies),
            })
        }
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

fn run_cell(
    config: &SweepConfig,
    pools: &SeedPools,
    rate_index: usize,
) -> Result<Vec<SweepCell>, SweepError> {
    let rate = config.rates[rate_index];
    let mut rng = Rng::new(subseed(pools.seed, 0x1000 + rate_index as u64));
    let contaminated = contaminate_raw(
        &pools.train_normals,
        &pools.injection,
        rate,
        config.train_total,
        &mut rng,
    )?;

    let encoder_state = fit_encoder(&contaminated)?;
    let train_ds = encode(&contaminated, &encoder_state)?;
    let test_ds = encode(&pools.test, &encoder_state)?;
    let fingerprint = encoder_state.fingerprint();

    let mut cfg = config.train.clone();
    let mut arch = cfg.architecture.clone();
    arch.feature_layout = train_ds.layout.clone();
    arch.input_width = train_ds.width();
    cfg.architecture = arch;
    cfg.seed = subseed(pools.seed, 0x2000 + rate_index as u64);

    let test_labels = test_ds.labels.clone().expect("test pools are labeled");
    let evaluate = |params: &crate::model::ModelParams| -> Result<f64, SweepError> {
        let scores = params.score_batch(&test_ds.x);
        Ok(auc(&ScoredSet::new(scores, test_labels.clone())?)?)
    };

    let mut cells = Vec::with_capacity(2);

    let (vae_params, vae_history) = train(&train_ds, &cfg.with_beta(Beta::ZERO))?;
    let vae_auc = evaluate(&vae_params)?;
    cells.push(SweepCell {
        row: SweepRow {
            rate,
            beta: 0.0,
            variant: Variant::Vae,
            seed: pools.seed,
            test_auc: vae_auc,
            best_epoch: vae_history.best_epoch.unwrap_or(0),
        },
        model: TrainedModel {
            params: vae_params,
            encoder_state: encoder_state.clone(),
            fingerprint: fingerprint.clone(),
            beta: 0.0,
            seed: cfg.seed,
        },
    });

    let (rt_beta, rt_params, rt_history) = match &config.beta {
        BetaSelection::Fixed(beta) => {
            let (params, history) = train(&train_ds, &cfg.with_beta(*beta))?;
            (*beta, params, history)
        }
        BetaSelection::Grid(grid) => {
            let result = grid_search_beta(&train_ds, &cfg, grid)?;
            (result.best_beta, result.model, result.history)
        }
    };
    let rt_auc = evaluate(&rt_params)?;
    cells.push(SweepCell {
        row: SweepRow {
            rate,
            beta: rt_beta.value(),
            variant: Variant::Rtvae,
            seed: pools.seed,
            test_auc: rt_auc,
            best_epoch: rt_history.best_epoch.unwrap_or(0),
        },
        model: TrainedModel {
            params: rt_params,
            encoder_state,
            fingerprint,
            beta: rt_beta.value(),
            seed: cfg.seed,
        },
    });

    Ok(cells)
}

/// Runs every (rate, seed) cell — in parallel — and returns rows sorted by
/// (rate, variant, seed), so output is independent of scheduling.
pub fn contamination_sweep(
    config: &SweepConfig,
    data: &SweepData,
) -> Result<SweepOutcome, SweepError> {
    let pools: Vec<SeedPools> = config
        .seeds
        .par_iter()
        .map(|&seed| prepare_pools(config, data, seed))
        .collect::<Result<_, _>>()?;

    let jobs: Vec<(usize, usize)> = (0..pools.len())
        .flat_map(|p| (0..config.rates.len()).map(move |r| (p, r)))
        .collect();

    let mut cells: Vec<SweepCell> = jobs
        .par_iter()
        .map(|&(p, r)| run_cell(config, &pools[p], r))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();

    cells.sort_by(|a, b| {
        a.row
            .rate
            .total_cmp(&b.row.rate)
            .then(a.row.variant.cmp(&b.row.variant))
            .then(a.row.seed.cmp(&b.row.seed))
    });
    Ok(SweepOutcome { cells })
}

/// Sweep CSV: `rate,beta,variant,seed,test_auc,best_epoch` (AUC fixed to six
/// decimals).
pub fn write_sweep_csv(path: impl AsRef<Path>, outcome: &SweepOutcome) -> std::io::Result<()> {
    let mut out = String::from("rate,beta,variant,seed,test_auc,best_epoch\n");
    for cell in &outcome.cells {
        let r = &cell.row;
        out.push_str(&format!(
            "{},{},{},{},{:.6},{}\n",
            r.rate, r.beta, r.variant, r.seed, r.test_auc, r.best_epoch
        ));
    }
    fsio::write_atomic(path.as_ref(), out.as_bytes())
}

/// Plot-data CSV: `rate,variant,mean_auc,min_auc,max_auc`.
pub fn write_aggregate_csv(path: impl AsRef<Path>, outcome: &SweepOutcome) -> std::io::Result<()> {
    let mut out = String::from("rate,variant,mean_auc,min_auc,max_auc\n");
    for a in outcome.aggregates() {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            a.rate, a.variant, a.mean_auc, a.min_auc, a.max_auc
        ));
    }
    fsio::write_atomic(path.as_ref(), out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;

    fn quick_config() -> SweepConfig {
        let arch = Architecture::defaults(vec![]);
        let mut train = TrainConfig::new(arch, 0);
        train.max_epochs = 2;
        train.batch_size = 64;
        let mut config = SweepConfig::new(train);
        config.rates = vec![0.0];
        config.seeds = vec![1];
        config.train_total = 200;
        config.test_normals = 50;
        config.test_anomalies = 50;
        config.beta = BetaSelection::Fixed(Beta::new(0.01).unwrap());
        config
    }

    fn quick_spec() -> SyntheticSpec {
        SyntheticSpec {
            train_normals: 250,
            train_anomalies: 80,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn single_rate_yields_two_rows() {
        let outcome =
            contamination_sweep(&quick_config(), &SweepData::Synthetic(quick_spec())).unwrap();
        let rows = outcome.rows();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].variant, Variant::Vae);
        assert_eq!(rows[1].variant, Variant::Rtvae);
        assert_eq!(rows[0].beta, 0.0);
        assert_eq!(rows[1].beta, 0.01);
        for row in &rows {
            assert!((0.0..=1.0).contains(&row.test_auc));
        }
    }

    #[test]
    fn sweep_csv_bytes_are_reproducible() {
        let config = quick_config();
        let data = SweepData::Synthetic(quick_spec());
        let dir = tempfile::tempdir().unwrap();

        let mut bytes = Vec::new();
        for run in 0..2 {
            let outcome = contamination_sweep(&config, &data).unwrap();
            let sweep_path = dir.path().join(format!("sweep{run}.csv"));
            let agg_path = dir.path().join(format!("agg{run}.csv"));
            write_sweep_csv(&sweep_path, &outcome).unwrap();
            write_aggregate_csv(&agg_path, &outcome).unwrap();
            bytes.push((
                std::fs::read(&sweep_path).unwrap(),
                std::fs::read(&agg_path).unwrap(),
            ));
        }
        assert_eq!(bytes[0], bytes[1]);
    }

    #[test]
    fn aggregates_average_over_seeds() {
        let mut config = quick_config();
        config.seeds = vec![1, 2];
        let outcome = contamination_sweep(&config, &SweepData::Synthetic(quick_spec())).unwrap();
        let aggs = outcome.aggregates();
        assert_eq!(aggs.len(), 2, "one aggregate per (rate, variant)");
        for agg in &aggs {
            let rows: Vec<_> = outcome
                .rows()
                .into_iter()
                .filter(|r| r.rate == agg.rate && r.variant == agg.variant)
                .collect();
            assert_eq!(rows.len(), 2);
            let mean = rows.iter().map(|r| r.test_auc).sum::<f64>() / 2.0;
            assert!((agg.mean_auc - mean).abs() < 1e-12);
            assert!(agg.min_auc <= agg.mean_auc && agg.mean_auc <= agg.max_auc);
        }
    }

    #[test]
    fn labeled_pools_must_be_large_enough() {
        let config = quick_config();
        let spec = quick_spec();
        let mut rng = Rng::new(5);
        let normals = generate_synthetic_raw(&spec, Label::Normal, 100, &mut rng).unwrap();
        let anomalies = generate_synthetic_raw(&spec, Label::Anomaly, 100, &mut rng).unwrap();
        let err =
            contamination_sweep(&config, &SweepData::Labeled { normals, anomalies }).unwrap_err();
        assert!(matches!(
            err,
            SweepError::Eval(EvalError::Data(
                crate::data::DataError::InsufficientPool { .. }
            ))
        ));
    }

    #[test]
    fn labeled_pools_run_end_to_end() {
        let mut config = quick_config();
        config.train_total = 120;
        config.test_normals = 30;
        config.test_anomalies = 30;
        config.rates = vec![0.0, 0.1];
        let spec = quick_spec();
        let mut rng = Rng::new(6);
        let normals = generate_synthetic_raw(&spec, Label::Normal, 400, &mut rng).unwrap();
        let anomalies = generate_synthetic_raw(&spec, Label::Anomaly, 120, &mut rng).unwrap();
        let outcome =
            contamination_sweep(&config, &SweepData::Labeled { normals, anomalies }).unwrap();
        assert_eq!(outcome.rows().len(), 4);
    }
}
