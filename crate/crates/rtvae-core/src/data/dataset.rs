//! Encoded datasets, shuffled splits, and labeled contamination.

use super::{DataError, FeatureColumn, Label, RawTable, RawValue};
use crate::numerics::{Matrix, Rng};

/// Encoded rows plus the layout that produced them. `labels`, when present,
/// aligns with rows and marks ground truth (or injected) classes.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub x: Matrix,
    pub layout: Vec<FeatureColumn>,
    pub labels: Option<Vec<Label>>,
    pub fingerprint: String,
}

impl EncodedDataset {
    pub fn n_rows(&self) -> usize {
        self.x.rows()
    }

    pub fn width(&self) -> usize {
        self.x.cols()
    }

    /// Rows gathered into a batch matrix, in index order.
    pub fn gather(&self, indices: &[usize]) -> Matrix {
        let width = self.width();
        let mut data = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            data.extend_from_slice(self.x.row(i));
        }
        Matrix::from_vec_unchecked(indices.len(), width, data)
    }

    /// New dataset containing the given rows, labels carried through.
    pub fn subset(&self, indices: &[usize]) -> EncodedDataset {
        EncodedDataset {
            x: self.gather(indices),
            layout: self.layout.clone(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            fingerprint: self.fingerprint.clone(),
        }
    }

    pub fn label_counts(&self) -> (usize, usize) {
        match &self.labels {
            Some(labels) => {
                let anomalies = labels.iter().filter(|l| **l == Label::Anomaly).count();
                (labels.len() - anomalies, anomalies)
            }
            None => (0, 0),
        }
    }
}

/// Disjoint partition by uniform shuffle; holdout size is
/// `round(fraction * n)`.
pub fn split(
    ds: &EncodedDataset,
    holdout_fraction: f64,
    rng: &mut Rng,
) -> Result<(EncodedDataset, EncodedDataset), DataError> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(DataError::BadFraction(holdout_fraction));
    }
    let n = ds.n_rows();
    if n == 0 {
        return Err(DataError::EmptyTable);
    }
    let holdout_size = (holdout_fraction * n as f64).round() as usize;
    let train_size = n - holdout_size.min(n);
    if holdout_size == 0 || train_size == 0 {
        return Err(DataError::DegenerateSplit {
            train: train_size,
            holdout: holdout_size,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let holdout = ds.subset(&order[..holdout_size]);
    let train = ds.subset(&order[holdout_size..]);
    Ok((train, holdout))
}

fn contamination_counts(rate: f64, total: usize) -> Result<(usize, usize), DataError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(DataError::BadRate(rate));
    }
    let anomalies = (rate * total as f64).round() as usize;
    Ok((total - anomalies, anomalies))
}

fn check_pool(name: &'static str, available: usize, needed: usize) -> Result<(), DataError> {
    if available < needed {
        return Err(DataError::InsufficientPool {
            pool: name,
            available,
            needed,
        });
    }
    Ok(())
}

/// Builds a training set of exactly `total` rows: `round(rate * total)` rows
/// sampled without replacement from `anomaly_pool` (labeled anomaly), the
/// remainder from `normals` (labeled normal), in shuffled order.
pub fn contaminate(
    normals: &EncodedDataset,
    anomaly_pool: &EncodedDataset,
    rate: f64,
    total: usize,
    rng: &mut Rng,
) -> Result<EncodedDataset, DataError> {
    if normals.fingerprint != anomaly_pool.fingerprint {
        return Err(DataError::EncodingMismatch {
            left: normals.fingerprint.clone(),
            right: anomaly_pool.fingerprint.clone(),
        });
    }
    let (n_normal, n_anomaly) = contamination_counts(rate, total)?;
    check_pool("anomaly", anomaly_pool.n_rows(), n_anomaly)?;
    check_pool("normal", normals.n_rows(), n_normal)?;

    let anomaly_idx = rng.sample_indices(anomaly_pool.n_rows(), n_anomaly);
    let normal_idx = rng.sample_indices(normals.n_rows(), n_normal);

    let width = normals.width();
    let mut rows: Vec<(Vec<f64>, Label)> = Vec::with_capacity(total);
    for &i in &anomaly_idx {
        rows.push((anomaly_pool.x.row(i).to_vec(), Label::Anomaly));
    }
    for &i in &normal_idx {
        rows.push((normals.x.row(i).to_vec(), Label::Normal));
    }
    rng.shuffle(&mut rows);

    let mut data = Vec::with_capacity(total * width);
    let mut labels = Vec::with_capacity(total);
    for (row, label) in rows {
        data.extend_from_slice(&row);
        labels.push(label);
    }
    Ok(EncodedDataset {
        x: Matrix::from_vec_unchecked(total, width, data),
        layout: normals.layout.clone(),
        labels: Some(labels),
        fingerprint: normals.fingerprint.clone(),
    })
}

/// Raw-table twin of [`contaminate`] used where the encoder is refit on the
/// contaminated mix before training.
pub fn contaminate_raw(
    normals: &RawTable,
    anomaly_pool: &RawTable,
    rate: f64,
    total: usize,
    rng: &mut Rng,
) -> Result<RawTable, DataError> {
    let (n_normal, n_anomaly) = contamination_counts(rate, total)?;
    check_pool("anomaly", anomaly_pool.n_rows(), n_anomaly)?;
    check_pool("normal", normals.n_rows(), n_normal)?;

    let anomaly_idx = rng.sample_indices(anomaly_pool.n_rows(), n_anomaly);
    let normal_idx = rng.sample_indices(normals.n_rows(), n_normal);

    let mut rows: Vec<(Vec<RawValue>, Label)> = Vec::with_capacity(total);
    for &i in &anomaly_idx {
        rows.push((anomaly_pool.rows[i].clone(), Label::Anomaly));
    }
    for &i in &normal_idx {
        rows.push((normals.rows[i].clone(), Label::Normal));
    }
    rng.shuffle(&mut rows);

    let mut out_rows = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for (row, label) in rows {
        out_rows.push(row);
        labels.push(label);
    }
    Ok(RawTable {
        schema: normals.schema.clone(),
        rows: out_rows,
        labels: Some(labels),
    })
}
