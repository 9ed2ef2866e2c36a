//! Desk-scale synthetic stand-in for the network datasets: labeled normal and
//! anomaly pools with class-conditional parameters in both feature kinds.

use super::EvalError;
use crate::data::{
    encode, fit_encoder, Column, ColumnKind, EncodedDataset, Label, RawTable, RawValue, TableSchema,
};
use crate::numerics::Rng;

/// One continuous column: a Gaussian per class.
#[derive(Debug, Clone)]
pub struct ContinuousSpec {
    pub normal_mean: f64,
    pub normal_std: f64,
    pub anomaly_mean: f64,
    pub anomaly_std: f64,
}

/// One categorical column: category probabilities per class (same arity).
#[derive(Debug, Clone)]
pub struct CategoricalSpec {
    pub normal_probs: Vec<f64>,
    pub anomaly_probs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub continuous: Vec<ContinuousSpec>,
    pub categorical: Vec<CategoricalSpec>,
    pub train_normals: usize,
    pub train_anomalies: usize,
}

impl Default for SyntheticSpec {
    /// Two continuous columns (normal N(0,1), anomaly N(4,1)) and one
    /// categorical column (normal 90/10 over two categories, anomaly 10/90);
    /// pools of 5000 normals and 1000 anomalies.
    fn default() -> Self {
        SyntheticSpec {
            continuous: vec![
                ContinuousSpec {
                    normal_mean: 0.0,
                    normal_std: 1.0,
                    anomaly_mean: 4.0,
                    anomaly_std: 1.0,
                },
                ContinuousSpec {
                    normal_mean: 0.0,
                    normal_std: 1.0,
                    anomaly_mean: 4.0,
                    anomaly_std: 1.0,
                },
            ],
            categorical: vec![CategoricalSpec {
                normal_probs: vec![0.9, 0.1],
                anomaly_probs: vec![0.1, 0.9],
            }],
            train_normals: 5000,
            train_anomalies: 1000,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.continuous.is_empty() || self.categorical.is_empty() {
            return Err(EvalError::BadSpec(
                "need at least one continuous and one categorical column".into(),
            ));
        }
        for c in &self.continuous {
            if !(c.normal_std > 0.0 && c.anomaly_std > 0.0) {
                return Err(EvalError::BadSpec("standard deviations must be > 0".into()));
            }
        }
        for c in &self.categorical {
            if c.normal_probs.len() != c.anomaly_probs.len() || c.normal_probs.len() < 2 {
                return Err(EvalError::BadSpec(
                    "category probabilities need matching arity >= 2".into(),
                ));
            }
            for probs in [&c.normal_probs, &c.anomaly_probs] {
                let sum: f64 = probs.iter().sum();
                if probs.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                    return Err(EvalError::BadSpec(format!(
                        "category probabilities must be nonnegative and sum to 1, got {probs:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> TableSchema {
        let mut columns = Vec::new();
        for i in 0..self.categorical.len() {
            columns.push(Column {
                name: format!("cat{i}"),
                kind: ColumnKind::Categorical,
            });
        }
        for i in 0..self.continuous.len() {
            columns.push(Column {
                name: format!("cont{i}"),
                kind: ColumnKind::Continuous,
            });
        }
        TableSchema {
            columns,
            label: None,
        }
    }
}

fn draw_category(probs: &[f64], rng: &mut Rng) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Raw labeled pool of `n` rows of the given class.
pub fn generate_synthetic_raw(
    spec: &SyntheticSpec,
    class: Label,
    n: usize,
    rng: &mut Rng,
) -> Result<RawTable, EvalError> {
    spec.validate()?;
    let schema = spec.schema();
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::with_capacity(schema.columns.len());
        for c in &spec.categorical {
            let probs = match class {
                Label::Normal => &c.normal_probs,
                Label::Anomaly => &c.anomaly_probs,
            };
            let k = draw_category(probs, rng);
            row.push(RawValue::Cat(format!("c{k}")));
        }
        for c in &spec.continuous {
            let (mean, std) = match class {
                Label::Normal => (c.normal_mean, c.normal_std),
                Label::Anomaly => (c.anomaly_mean, c.anomaly_std),
            };
            row.push(RawValue::Cont(mean + std * rng.normal()));
        }
        rows.push(row);
    }
    Ok(RawTable {
        schema,
        rows,
        labels: Some(vec![class; n]),
    })
}

/// Labeled pools of the configured sizes, encoded with an encoder
/// fitted on the normal pool.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    rng: &mut Rng,
) -> Result<(EncodedDataset, EncodedDataset), EvalError> {
    let normals = generate_synthetic_raw(spec, Label::Normal, spec.train_normals, rng)?;
    let anomalies = generate_synthetic_raw(spec, Label::Anomaly, spec.train_anomalies, rng)?;
    let state = fit_encoder(&normals)?;
    Ok((encode(&normals, &state)?, encode(&anomalies, &state)?))
}
