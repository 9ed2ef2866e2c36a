//! Fitted encodings: one-hot with a reserved UNK slot for categoricals,
//! z-scores for continuous columns.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::EncodedDataset;
use super::{ColumnKind, DataError, RawTable, RawValue};

use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnEncoder {
    /// Vocabulary in first-occurrence order; the UNK slot sits at index
    /// `vocab.len()`.
    Categorical { vocab: Vec<String> },
    /// Population mean and standard deviation; constant columns get std 1.
    Continuous { mean: f64, std: f64 },
}

/// Per-column fitted encoding, in feature-column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderState {
    pub columns: Vec<(String, ColumnEncoder)>,
}

/// Position of one encoded column inside the dataset matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: ColumnKind,
    pub offset: usize,
    pub width: usize,
}

/// One decoded feature value; `Cat(None)` marks the UNK slot.
#[derive(Debug, Clone, PartialEq)]
pub enum DecodedValue {
    Cat(Option<String>),
    Cont(f64),
}

impl EncoderState {
    /// Encoded column layout: categorical blocks of width `K + 1`, continuous
    /// columns of width 1, tiling `[0, total_width)` in column order.
    pub fn layout(&self) -> Vec<FeatureColumn> {
        let mut offset = 0;
        let mut out = Vec::with_capacity(self.columns.len());
        for (name, enc) in &self.columns {
            let (kind, width) = match enc {
                ColumnEncoder::Categorical { vocab } => (ColumnKind::Categorical, vocab.len() + 1),
                ColumnEncoder::Continuous { .. } => (ColumnKind::Continuous, 1),
            };
            out.push(FeatureColumn {
                name: name.clone(),
                kind,
                offset,
                width,
            });
            offset += width;
        }
        out
    }

    pub fn encoded_width(&self) -> usize {
        self.layout()
            .last()
            .map(|c| c.offset + c.width)
            .unwrap_or(0)
    }

    /// Stable digest of the fitted encoding; models and encoded datasets
    /// produced from the same state carry the same fingerprint.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, enc) in &self.columns {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            match enc {
                ColumnEncoder::Categorical { vocab } => {
                    hasher.update([1u8]);
                    for v in vocab {
                        hasher.update(v.as_bytes());
                        hasher.update([0u8]);
                    }
                }
                ColumnEncoder::Continuous { mean, std } => {
                    hasher.update([2u8]);
                    hasher.update(mean.to_le_bytes());
                    hasher.update(std.to_le_bytes());
                }
            }
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Inverts one encoded row back to raw values. Categorical blocks decode
    /// to the vocabulary entry at the hot index (`None` for UNK); continuous
    /// entries invert the z-score.
    pub fn decode_row(&self, row: &[f64]) -> Vec<DecodedValue> {
        let mut out = Vec::with_capacity(self.columns.len());
        let mut offset = 0;
        for (_, enc) in &self.columns {
            match enc {
                ColumnEncoder::Categorical { vocab } => {
                    let width = vocab.len() + 1;
                    let block = &row[offset..offset + width];
                    let hot = block
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(b.1))
                        .map(|(i, _)| i)
                        .unwrap_or(0);
                    out.push(DecodedValue::Cat(vocab.get(hot).cloned()));
                    offset += width;
                }
                ColumnEncoder::Continuous { mean, std } => {
                    out.push(DecodedValue::Cont(row[offset] * std + mean));
                    offset += 1;
                }
            }
        }
        out
    }
}

/// Fits vocabularies and standardization statistics over all rows of `table`.
pub fn fit_encoder(table: &RawTable) -> Result<EncoderState, DataError> {
    if table.rows.is_empty() {
        return Err(DataError::EmptyTable);
    }
    let feature_columns: Vec<_> = table.schema.feature_columns().cloned().collect();
    let n = table.rows.len() as f64;

    let mut columns = Vec::with_capacity(feature_columns.len());
    for (idx, column) in feature_columns.iter().enumerate() {
        let enc = match column.kind {
            ColumnKind::Categorical => {
                let mut vocab: Vec<String> = Vec::new();
                for row in &table.rows {
                    if let RawValue::Cat(v) = &row[idx] {
                        if !vocab.iter().any(|seen| seen == v) {
                            vocab.push(v.clone());
                        }
                    }
                }
                ColumnEncoder::Categorical { vocab }
            }
            ColumnKind::Continuous => {
                let mut sum = 0.0;
                for row in &table.rows {
                    if let RawValue::Cont(v) = &row[idx] {
                        sum += v;
                    }
                }
                let mean = sum / n;
                let mut sq = 0.0;
                for row in &table.rows {
                    if let RawValue::Cont(v) = &row[idx] {
                        sq += (v - mean) * (v - mean);
                    }
                }
                let var = sq / n;
                let std = if var > 0.0 { var.sqrt() } else { 1.0 };
                ColumnEncoder::Continuous { mean, std }
            }
        };
        columns.push((column.name.clone(), enc));
    }
    Ok(EncoderState { columns })
}

/// Applies a fitted encoding: one-hot categoricals (unseen values map to the
/// UNK slot) and z-scored continuous values. The state must have been fitted
/// against the table's schema.
pub fn encode(table: &RawTable, state: &EncoderState) -> Result<EncodedDataset, DataError> {
    let features: Vec<_> = table.schema.feature_columns().collect();
    if features.len() != state.columns.len() {
        return Err(DataError::EncoderMismatch(format!(
            "table has {} feature columns, encoder was fitted on {}",
            features.len(),
            state.columns.len()
        )));
    }
    for (column, (name, enc)) in features.iter().zip(&state.columns) {
        let enc_kind = match enc {
            ColumnEncoder::Categorical { .. } => ColumnKind::Categorical,
            ColumnEncoder::Continuous { .. } => ColumnKind::Continuous,
        };
        if column.name != *name || column.kind != enc_kind {
            return Err(DataError::EncoderMismatch(format!(
                "column {:?} ({:?}) does not match encoder column {:?} ({:?})",
                column.name, column.kind, name, enc_kind
            )));
        }
    }

    let layout = state.layout();
    let width = state.encoded_width();
    let mut data = vec![0.0; table.rows.len() * width];

    for (r, row) in table.rows.iter().enumerate() {
        let dst = &mut data[r * width..(r + 1) * width];
        for (idx, (feature, (_, enc))) in layout.iter().zip(&state.columns).enumerate() {
            match (enc, &row[idx]) {
                (ColumnEncoder::Categorical { vocab }, RawValue::Cat(v)) => {
                    let hot = vocab
                        .iter()
                        .position(|entry| entry == v)
                        .unwrap_or(vocab.len());
                    dst[feature.offset + hot] = 1.0;
                }
                (ColumnEncoder::Continuous { mean, std }, RawValue::Cont(v)) => {
                    dst[feature.offset] = (v - mean) / std;
                }
                _ => unreachable!("kinds validated above"),
            }
        }
    }

    Ok(EncodedDataset {
        x: Matrix::from_vec_unchecked(table.rows.len(), width, data),
        layout,
        labels: table.labels.clone(),
        fingerprint: state.fingerprint(),
    })
}
