//! Tabular schemas, CSV ingestion, categorical/continuous encodings,
//! dataset splits and labeled contamination.

mod cache;
mod dataset;
mod encode;
mod ingest;
mod schema;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{read_cache, write_cache};
pub use dataset::{contaminate, contaminate_raw, split, EncodedDataset};
pub use encode::{encode, fit_encoder, ColumnEncoder, DecodedValue, EncoderState, FeatureColumn};
pub use ingest::{ingest_csv, ingest_reader, RawTable, RawValue};
pub use schema::parse_schema;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("schema: {0}")]
    Schema(String),
    #[error("schema: duplicate column {0:?}")]
    DuplicateColumn(String),
    #[error("schema: unknown kind {kind:?} for column {column:?}")]
    UnknownKind { column: String, kind: String },
    #[error("csv line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("csv line {line}, column {column:?}: cannot parse {value:?} as a number")]
    BadNumber {
        line: u64,
        column: String,
        value: String,
    },
    #[error("csv file contains no data rows")]
    EmptyFile,
    #[error("table contains no rows")]
    EmptyTable,
    #[error("split fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("split would leave an empty partition ({train} train, {holdout} holdout)")]
    DegenerateSplit { train: usize, holdout: usize },
    #[error("contamination rate {0} outside [0, 1)")]
    BadRate(f64),
    #[error("{pool} pool has {available} rows, {needed} needed")]
    InsufficientPool {
        pool: &'static str,
        available: usize,
        needed: usize,
    },
    #[error("datasets were encoded differently ({left} vs {right})")]
    EncodingMismatch { left: String, right: String },
    #[error("encoder state does not fit this table: {0}")]
    EncoderMismatch(String),
    #[error("dataset cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Categorical,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub column: String,
    pub normal_values: Vec<String>,
}

/// Declarative description of a table: ordered columns plus an optional label
/// column. The label column, when declared, is excluded from the feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub columns: Vec<Column>,
    pub label: Option<LabelSpec>,
}

impl TableSchema {
    /// Index of the label column within `columns`, if declared.
    pub fn label_index(&self) -> Option<usize> {
        let spec = self.label.as_ref()?;
        self.columns.iter().position(|c| c.name == spec.column)
    }

    /// Feature columns in declaration order (label column excluded).
    pub fn feature_columns(&self) -> impl Iterator<Item = &Column> {
        let label_idx = self.label_index();
        self.columns
            .iter()
            .enumerate()
            .filter(move |(i, _)| Some(*i) != label_idx)
            .map(|(_, c)| c)
    }
}

/// Ground-truth row class, either read from a label column or attached when
/// contamination is injected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomaly,
}
