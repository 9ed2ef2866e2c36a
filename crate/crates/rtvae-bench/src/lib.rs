//! Shared fixtures for the criterion benchmarks.

use rtvae_core::data::{ColumnKind, FeatureColumn, Label};
use rtvae_core::numerics::{Matrix, Rng};

/// Scores from two shifted normal populations plus labels.
pub fn scored_population(n: usize, anomaly_share: f64, seed: u64) -> (Vec<f64>, Vec<Label>) {
    let mut rng = Rng::new(seed);
    let mut scores = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        if rng.uniform() < anomaly_share {
            scores.push(2.0 + rng.normal());
            labels.push(Label::Anomaly);
        } else {
            scores.push(rng.normal());
            labels.push(Label::Normal);
        }
    }
    (scores, labels)
}

/// A mixed one-hot + continuous batch matching [`bench_layout`].
pub fn mixed_batch(rows: usize, seed: u64) -> Matrix {
    let mut rng = Rng::new(seed);
    let mut batch = Matrix::zeros(rows, 5);
    for r in 0..rows {
        batch.set(r, rng.below(3), 1.0);
        batch.set(r, 3, rng.normal());
        batch.set(r, 4, rng.normal());
    }
    batch
}

pub fn bench_layout() -> Vec<FeatureColumn> {
    vec![
        FeatureColumn {
            name: "cat0".into(),
            kind: ColumnKind::Categorical,
            offset: 0,
            width: 3,
        },
        FeatureColumn {
            name: "cont0".into(),
            kind: ColumnKind::Continuous,
            offset: 3,
            width: 1,
        },
        FeatureColumn {
            name: "cont1".into(),
            kind: ColumnKind::Continuous,
            offset: 4,
            width: 1,
        },
    ]
}
