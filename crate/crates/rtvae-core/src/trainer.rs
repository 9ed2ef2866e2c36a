//! The optimization loop: minibatched Adam on the total loss, early stopping
//! on a hold-out metric, and beta model selection over a logarithmic grid.
//!
//! The hold-out metric is AUC against injection labels when the hold-out
//! carries both classes (the experiment harness injects contamination, so it
//! usually does). Without a two-class hold-out — an uncontaminated run or
//! unlabeled data — the fallback is the standard (beta = 0) hold-out loss at
//! the posterior mean, which stays comparable across beta values.

use rayon::prelude::*;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

use crate::data::{split, DataError, EncodedDataset};
use crate::divergences::{
    categorical_ce, gaussian_nll, kl_gaussian_standard, total_loss, Beta, LossBreakdown,
};
use crate::eval::{auc, EvalError, ScoredSet};
use crate::fsio;
use crate::model::{init_params, Architecture, HeadValue, ModelError, ModelParams};
use crate::numerics::{Matrix, NumericsError, Rng, Tape};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("hold-out has a single class; AUC early stopping needs both (use the loss metric)")]
    SingleClassHoldout,
    #[error("beta grid is empty")]
    EmptyGrid,
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Hold-out metric for early stopping and grid selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationMetric {
    /// AUC when the hold-out has both classes, loss otherwise.
    Auto,
    /// Require hold-out AUC; errors on a single-class hold-out.
    Auc,
    /// Standard hold-out loss at the posterior mean.
    HoldoutLoss,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub beta: Beta,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
    pub architecture: Architecture,
    pub validation: ValidationMetric,
}

impl TrainConfig {
    /// Defaults: lr 1e-3, Adam bias-correction parameters 0.5 / 0.999,
    /// batch 256, 100 epochs, patience 10, 20% hold-out.
    pub fn new(architecture: Architecture, seed: u64) -> Self {
        TrainConfig {
            beta: Beta::ZERO,
            learning_rate: 1e-3,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 256,
            max_epochs: 100,
            patience: 10,
            holdout_fraction: 0.2,
            seed,
            architecture,
            validation: ValidationMetric::Auto,
        }
    }

    pub fn with_beta(&self, beta: Beta) -> Self {
        let mut cfg = self.clone();
        cfg.beta = beta;
        cfg
    }

    fn validate(&self) -> Result<(), TrainError> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(TrainError::BadConfig("learning_rate must be > 0".into()));
        }
        for (name, v) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(TrainError::BadConfig(format!("{name} must be in [0, 1)")));
            }
        }
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Adam moment estimates, one pair per parameter matrix.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let shapes: Vec<Matrix> = params
            .param_list()
            .iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        AdamState {
            m: shapes.clone(),
            v: shapes,
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update: `theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)` with
/// bias-corrected moments.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[Matrix],
    state: &mut AdamState,
    config: &TrainConfig,
) {
    state.t += 1;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let correction1 = 1.0 - b1.powi(state.t as i32);
    let correction2 = 1.0 - b2.powi(state.t as i32);

    for (((param, grad), m), v) in params
        .param_list_mut()
        .into_iter()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        debug_assert_eq!(param.shape(), grad.shape());
        for (((p, &g), m), v) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_epsilon);
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub val_auc: Option<f64>,
    /// Selection score, higher is better (AUC, or negated hold-out loss).
    pub val_metric: f64,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
    /// Best selection score over epochs (see [`EpochStats::val_metric`]).
    pub best_val_metric: Option<f64>,
    pub best_val_auc: Option<f64>,
    pub used_auc_metric: bool,
}

/// Standard (beta = 0) loss of a dataset at the posterior mean, no sampling.
/// Comparable across models trained with different beta.
pub fn holdout_loss(params: &ModelParams, x: &Matrix) -> LossBreakdown {
    let arch = &params.arch;
    let (mu, logvar) = params.encode_plain(x);
    let heads = params.decode_plain(&mu);
    let sigma = arch.obs_sigma;

    let mut rec_cat = 0.0;
    let mut rec_cont = 0.0;
    for (col, head) in arch.feature_layout.iter().zip(&heads) {
        match head {
            HeadValue::Categorical(probs) => {
                for r in 0..x.rows() {
                    let block = &x.row(r)[col.offset..col.offset + col.width];
                    let target = block
                        .iter()
                        .position(|&v| v == 1.0)
                        .expect("categorical block must be one-hot");
                    rec_cat += categorical_ce(probs.row(r), target)
                        .expect("target index within head width");
                }
            }
            HeadValue::Continuous(xhat) => {
                for r in 0..x.rows() {
                    rec_cont += gaussian_nll(xhat.get(r, 0), x.get(r, col.offset), sigma);
                }
            }
        }
    }
    let n = x.rows() as f64;
    let rec_categorical = rec_cat / n;
    let rec_continuous = rec_cont / n;
    let kl_regularizer = kl_gaussian_standard(&mu, &logvar);
    LossBreakdown {
        rec_categorical,
        rec_continuous,
        kl_regularizer,
        total: rec_categorical + rec_continuous + kl_regularizer,
    }
}

fn holdout_has_both_classes(holdout: &EncodedDataset) -> bool {
    let (normals, anomalies) = holdout.label_counts();
    normals > 0 && anomalies > 0
}

/// Trains one model. Per epoch: shuffle, minibatch Adam on the total loss
/// (remainder batch kept), then score the hold-out; stops after `patience`
/// non-improving evaluations or `max_epochs`. Returns the parameters of the
/// best epoch, never the last one by default.
pub fn train(
    ds: &EncodedDataset,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainHistory), TrainError> {
    config.validate()?;
    if ds.n_rows() == 0 {
        return Err(TrainError::EmptyDataset);
    }

    let mut rng = Rng::new(config.seed);
    let (train_ds, holdout) = split(ds, config.holdout_fraction, &mut rng)?;
    let mut params = init_params(&config.architecture, &mut rng)?;

    let use_auc = match config.validation {
        ValidationMetric::Auc => {
            if !holdout_has_both_classes(&holdout) {
                return Err(TrainError::SingleClassHoldout);
            }
            true
        }
        ValidationMetric::Auto => holdout_has_both_classes(&holdout),
        ValidationMetric::HoldoutLoss => false,
    };

    let mut history = TrainHistory {
        used_auc_metric: use_auc,
        ..TrainHistory::default()
    };
    if config.max_epochs == 0 {
        return Ok((params, history));
    }

    let mut adam = AdamState::new(&params);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut stale = 0usize;
    let n = train_ds.n_rows();

    for epoch in 0..config.max_epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);

        let mut sums = (0.0, 0.0, 0.0, 0.0);
        for chunk in order.chunks(config.batch_size) {
            let batch = train_ds.gather(chunk);
            let mut tape = Tape::new();
            let graph = total_loss(&params, &batch, config.beta, &mut rng, &mut tape)?;
            tape.backward(graph.total)?;
            let grads = graph.binding.gradients(&tape);
            adam_step(&mut params, &grads, &mut adam, config);

            let w = chunk.len() as f64;
            sums.0 += graph.breakdown.rec_categorical * w;
            sums.1 += graph.breakdown.rec_continuous * w;
            sums.2 += graph.breakdown.kl_regularizer * w;
            sums.3 += graph.breakdown.total * w;
        }
        let loss = LossBreakdown {
            rec_categorical: sums.0 / n as f64,
            rec_continuous: sums.1 / n as f64,
            kl_regularizer: sums.2 / n as f64,
            total: sums.3 / n as f64,
        };

        let val_auc = if holdout_has_both_classes(&holdout) {
            let scores = params.score_batch(&holdout.x);
            let labels = holdout.labels.clone().expect("labels checked above");
            Some(auc(&ScoredSet::new(scores, labels)?)?)
        } else {
            None
        };
        let val_metric = if use_auc {
            val_auc.expect("AUC metric requires two-class holdout")
        } else {
            -holdout_loss(&params, &holdout.x).total
        };

        history.epochs.push(EpochStats {
            epoch,
            loss,
            val_auc,
            val_metric,
            wall_secs: started.elapsed().as_secs_f64(),
        });

        let improved = best.as_ref().is_none_or(|(m, _, _)| val_metric > *m);
        if improved {
            best = Some((val_metric, epoch, params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    let (best_metric, best_epoch, best_params) = best.expect("at least one epoch ran");
    history.best_epoch = Some(best_epoch);
    history.best_val_metric = Some(best_metric);
    history.best_val_auc = history.epochs[best_epoch].val_auc;
    Ok((best_params, history))
}

#[derive(Debug, Clone)]
pub struct GridRow {
    pub beta: f64,
    pub val_metric: f64,
    pub val_auc: Option<f64>,
    pub best_epoch: usize,
}

pub struct GridSearchResult {
    pub best_beta: Beta,
    pub model: ModelParams,
    pub history: TrainHistory,
    pub table: Vec<GridRow>,
}

/// Trains one model per grid value with the same seed (hence the same split,
/// init and noise stream) and returns the argmax by hold-out AUC of each
/// returned model — the loss metric is the fallback when the hold-out has a
/// single class. Ties break toward the smaller beta. Cells run in parallel.
pub fn grid_search_beta(
    ds: &EncodedDataset,
    base: &TrainConfig,
    grid: &[Beta],
) -> Result<GridSearchResult, TrainError> {
    if grid.is_empty() {
        return Err(TrainError::EmptyGrid);
    }
    let mut sorted: Vec<Beta> = grid.to_vec();
    sorted.sort_by(|a, b| a.value().total_cmp(&b.value()));

    let outcomes: Vec<(Beta, (ModelParams, TrainHistory))> = sorted
        .par_iter()
        .map(|&beta| train(ds, &base.with_beta(beta)).map(|r| (beta, r)))
        .collect::<Result<_, _>>()?;

    let selection_score = |history: &TrainHistory| {
        history
            .best_val_auc
            .or(history.best_val_metric)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let table: Vec<GridRow> = outcomes
        .iter()
        .map(|(beta, (_, history))| GridRow {
            beta: beta.value(),
            val_metric: selection_score(history),
            val_auc: history.best_val_auc,
            best_epoch: history.best_epoch.unwrap_or(0),
        })
        .collect();

    let mut best_idx = 0;
    for (i, row) in table.iter().enumerate().skip(1) {
        if row.val_metric > table[best_idx].val_metric {
            best_idx = i;
        }
    }
    let (best_beta, (model, history)) = outcomes
        .into_iter()
        .nth(best_idx)
        .expect("best index within table");

    Ok(GridSearchResult {
        best_beta,
        model,
        history,
        table,
    })
}

/// History CSV: `epoch,loss_total,loss_cat,loss_cont,loss_kl,val_auc`.
/// Wall times are not serialized, so reruns are byte-identical.
pub fn write_history_csv(path: impl AsRef<Path>, history: &TrainHistory) -> Result<(), TrainError> {
    let mut out = String::from("epoch,loss_total,loss_cat,loss_cont,loss_kl,val_auc\n");
    for e in &history.epochs {
        let val_auc = e
            .val_auc
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "nan".into());
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{}\n",
            e.epoch,
            e.loss.total,
            e.loss.rec_categorical,
            e.loss.rec_continuous,
            e.loss.kl_regularizer,
            val_auc
        ));
    }
    fsio::write_atomic(path.as_ref(), out.as_bytes())?;
    Ok(())
}
