//! CSV ingestion against a declared schema.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use super::{ColumnKind, DataError, Label, TableSchema};

/// One parsed feature value.
#[derive(Debug, Clone, PartialEq)]
pub enum RawValue {
    Cat(String),
    Cont(f64),
}

/// Parsed rows (feature columns only, in schema order) plus labels when the
/// schema declares a label column.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub schema: TableSchema,
    pub rows: Vec<Vec<RawValue>>,
    pub labels: Option<Vec<Label>>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

/// Reads a delimited file row by row. `has_header` skips the first record.
pub fn ingest_csv(
    path: impl AsRef<Path>,
    schema: &TableSchema,
    has_header: bool,
) -> Result<RawTable, DataError> {
    let file = File::open(path.as_ref())?;
    ingest_reader(file, schema, has_header)
}

pub fn ingest_reader(
    reader: impl Read,
    schema: &TableSchema,
    has_header: bool,
) -> Result<RawTable, DataError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_reader(reader);

    let label_idx = schema.label_index();
    let mut rows = Vec::new();
    let mut labels: Option<Vec<Label>> = label_idx.map(|_| Vec::new());

    for record in csv_reader.records() {
        let record = record.map_err(|e| DataError::Cache(e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != schema.columns.len() {
            return Err(DataError::FieldCount {
                line,
                expected: schema.columns.len(),
                found: record.len(),
            });
        }

        let mut row = Vec::with_capacity(schema.columns.len());
        for (idx, column) in schema.columns.iter().enumerate() {
            let field = record.get(idx).unwrap_or("");
            if Some(idx) == label_idx {
                let spec = schema.label.as_ref().unwrap();
                let label = if spec.normal_values.iter().any(|v| v == field) {
                    Label::Normal
                } else {
                    Label::Anomaly
                };
                labels.as_mut().unwrap().push(label);
                continue;
            }
            match column.kind {
                ColumnKind::Categorical => row.push(RawValue::Cat(field.to_string())),
                ColumnKind::Continuous => {
                    let parsed: f64 = field.trim().parse().map_err(|_| DataError::BadNumber {
                        line,
                        column: column.name.clone(),
                        value: field.to_string(),
                    })?;
                    if !parsed.is_finite() {
                        return Err(DataError::BadNumber {
                            line,
                            column: column.name.clone(),
                            value: field.to_string(),
                        });
                    }
                    row.push(RawValue::Cont(parsed));
                }
            }
        }
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(DataError::EmptyFile);
    }
    Ok(RawTable {
        schema: schema.clone(),
        rows,
        labels,
    })
}
