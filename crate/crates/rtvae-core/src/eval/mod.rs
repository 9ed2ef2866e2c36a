//! Anomaly scoring, exact AUC, synthetic data generation and the
//! contamination-sweep experiment harness.

mod sweep;
mod synthetic;

use thiserror::Error;

use crate::data::{EncodedDataset, Label};
use crate::model::TrainedModel;

pub use sweep::{
    contamination_sweep, write_aggregate_csv, write_sweep_csv, AggregateRow, BetaSelection,
    SweepCell, SweepConfig, SweepData, SweepError, SweepOutcome, SweepRow, Variant,
};
pub use synthetic::{
    generate_synthetic, generate_synthetic_raw, CategoricalSpec, ContinuousSpec, SyntheticSpec,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("scores and labels have different lengths ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
    #[error("AUC is undefined on a single-class set ({normals} normal, {anomalies} anomaly)")]
    SingleClass { normals: usize, anomalies: usize },
    #[error("model fingerprint {model} does not match dataset fingerprint {data}")]
    FingerprintMismatch { model: String, data: String },
    #[error("synthetic spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Scores aligned with ground-truth labels.
#[derive(Debug, Clone)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<Label>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<Label>) -> Result<ScoredSet, EvalError> {
        if scores.len() != labels.len() {
            return Err(EvalError::LengthMismatch {
                scores: scores.len(),
                labels: labels.len(),
            });
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(EvalError::NonFiniteScore(i));
        }
        Ok(ScoredSet { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }
}

/// Area under the ROC curve as the Mann-Whitney rank statistic:
/// `P(score_anomaly > score_normal) + 0.5 P(equal)`, computed exactly via one
/// sort with midrank tie handling. `O(n log n)`.
pub fn auc(set: &ScoredSet) -> Result<f64, EvalError> {
    let n = set.scores.len();
    let anomalies = set.labels.iter().filter(|l| **l == Label::Anomaly).count();
    let normals = n - anomalies;
    if anomalies == 0 || normals == 0 {
        return Err(EvalError::SingleClass { normals, anomalies });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| set.scores[a].total_cmp(&set.scores[b]));

    // midranks over tie groups, 1-based
    let mut anomaly_rank_sum = 0.0;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && set.scores[order[end]] == set.scores[order[start]] {
            end += 1;
        }
        let midrank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            if set.labels[idx] == Label::Anomaly {
                anomaly_rank_sum += midrank;
            }
        }
        start = end;
    }

    let a = anomalies as f64;
    let u = anomaly_rank_sum - a * (a + 1.0) / 2.0;
    Ok(u / (a * normals as f64))
}

/// Per-row anomaly scores for a dataset, order preserved. The dataset must
/// have been encoded with the model's encoder state.
pub fn score_dataset(model: &TrainedModel, ds: &EncodedDataset) -> Result<Vec<f64>, EvalError> {
    if model.fingerprint != ds.fingerprint {
        return Err(EvalError::FingerprintMismatch {
            model: model.fingerprint.clone(),
            data: ds.fingerprint.clone(),
        });
    }
    if ds.n_rows() == 0 {
        return Ok(Vec::new());
    }
    Ok(model.params.score_batch(&ds.x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Instant;

    fn set(scores: Vec<f64>, labels: Vec<Label>) -> ScoredSet {
        ScoredSet::new(scores, labels).unwrap()
    }

    use Label::{Anomaly, Normal};

    #[test]
    fn perfect_separation_is_one() {
        let s = set(
            vec![0.9, 0.8, 0.1, 0.2],
            vec![Anomaly, Anomaly, Normal, Normal],
        );
        assert_eq!(auc(&s).unwrap(), 1.0);
    }

    #[test]
    fn all_ties_are_half() {
        let s = set(
            vec![0.5; 6],
            vec![Anomaly, Normal, Anomaly, Normal, Normal, Anomaly],
        );
        assert_eq!(auc(&s).unwrap(), 0.5);
    }

    #[test]
    fn four_point_case() {
        // anomalies (0.9, 0.4), normals (0.2, 0.6): 3 wins of 4 pairs
        let s = set(
            vec![0.9, 0.4, 0.2, 0.6],
            vec![Anomaly, Anomaly, Normal, Normal],
        );
        assert_eq!(auc(&s).unwrap(), 0.75);
    }

    #[test]
    fn single_class_is_an_error() {
        let s = set(vec![1.0, 2.0], vec![Normal, Normal]);
        assert!(matches!(auc(&s), Err(EvalError::SingleClass { .. })));
        let s = set(vec![1.0, 2.0], vec![Anomaly, Anomaly]);
        assert!(matches!(auc(&s), Err(EvalError::SingleClass { .. })));
    }

    #[test]
    fn non_finite_scores_rejected() {
        assert!(matches!(
            ScoredSet::new(vec![1.0, f64::INFINITY], vec![Normal, Anomaly]),
            Err(EvalError::NonFiniteScore(1))
        ));
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(matches!(
            ScoredSet::new(vec![1.0], vec![Normal, Anomaly]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    /// Brute-force oracle: all anomaly-normal pairs, half credit for ties.
    pub(super) fn auc_brute_force(set: &ScoredSet) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in set.scores().iter().enumerate() {
            if set.labels()[i] != Anomaly {
                continue;
            }
            for (j, &sj) in set.scores().iter().enumerate() {
                if set.labels()[j] != Normal {
                    continue;
                }
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn matches_brute_force_with_ties() {
        let mut rng = crate::numerics::Rng::new(404);
        for case in 0..200 {
            let n = 2 + rng.below(49);
            // draw from a small grid so ties are common
            let scores: Vec<f64> = (0..n).map(|_| rng.below(8) as f64 / 4.0).collect();
            let mut labels: Vec<Label> = (0..n)
                .map(|_| if rng.below(2) == 0 { Normal } else { Anomaly })
                .collect();
            // force both classes
            labels[0] = Normal;
            if n > 1 {
                labels[1] = Anomaly;
            }
            let s = set(scores, labels);
            let fast = auc(&s).unwrap();
            let brute = auc_brute_force(&s);
            assert!(
                (fast - brute).abs() < 1e-12,
                "case {case}: fast {fast} vs brute {brute}"
            );
        }
    }

    #[test]
    fn million_element_auc_under_a_second() {
        let mut rng = crate::numerics::Rng::new(1000);
        let n = 1_000_000;
        let scores: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let labels: Vec<Label> = (0..n)
            .map(|_| if rng.below(10) == 0 { Anomaly } else { Normal })
            .collect();
        let s = set(scores, labels);
        let started = Instant::now();
        let value = auc(&s).unwrap();
        let elapsed = started.elapsed();
        assert!((0.0..=1.0).contains(&value));
        assert!(
            elapsed.as_secs_f64() < 1.0,
            "AUC on 1e6 rows took {elapsed:?}"
        );
    }

    fn toy_model_and_layout() -> (TrainedModel, Vec<crate::data::FeatureColumn>) {
        use crate::data::{ColumnKind, EncoderState, FeatureColumn};
        use crate::model::{init_params, Architecture};
        let layout = vec![FeatureColumn {
            name: "a".into(),
            kind: ColumnKind::Continuous,
            offset: 0,
            width: 1,
        }];
        let mut arch = Architecture::defaults(layout.clone());
        arch.encoder_hidden = vec![4];
        arch.decoder_hidden = vec![4];
        arch.latent_dim = 2;
        let params = init_params(&arch, &mut crate::numerics::Rng::new(1)).unwrap();
        let model = TrainedModel {
            params,
            encoder_state: EncoderState { columns: vec![] },
            fingerprint: "fp".into(),
            beta: 0.0,
            seed: 0,
        };
        (model, layout)
    }

    #[test]
    fn empty_dataset_scores_empty() {
        let (model, layout) = toy_model_and_layout();
        let ds = EncodedDataset {
            x: crate::numerics::Matrix::zeros(0, 1),
            layout,
            labels: None,
            fingerprint: "fp".into(),
        };
        assert!(score_dataset(&model, &ds).unwrap().is_empty());

        let mut mismatched = ds.clone();
        mismatched.fingerprint = "other".into();
        assert!(matches!(
            score_dataset(&model, &mismatched),
            Err(EvalError::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn permuting_rows_permutes_scores() {
        let (model, layout) = toy_model_and_layout();
        let values = [0.3, -1.2, 2.0, 0.0, 0.7];
        let ds = EncodedDataset {
            x: crate::numerics::Matrix::from_vec(5, 1, values.to_vec()).unwrap(),
            layout: layout.clone(),
            labels: None,
            fingerprint: "fp".into(),
        };
        let scores = score_dataset(&model, &ds).unwrap();

        let order = [4usize, 2, 0, 3, 1];
        let permuted = ds.subset(&order);
        let permuted_scores = score_dataset(&model, &permuted).unwrap();
        for (out_pos, &src) in order.iter().enumerate() {
            assert_eq!(permuted_scores[out_pos].to_bits(), scores[src].to_bits());
        }
        // duplicated rows score identically
        let doubled = ds.subset(&[1, 1]);
        let doubled_scores = score_dataset(&model, &doubled).unwrap();
        assert_eq!(doubled_scores[0].to_bits(), doubled_scores[1].to_bits());
    }
}
