//! Schema documents: TOML with an ordered `[[columns]]` array and an optional
//! `[label]` table.

use serde::Deserialize;
use std::collections::HashSet;

use super::{Column, ColumnKind, DataError, LabelSpec, TableSchema};

#[derive(Deserialize)]
struct SchemaDoc {
    columns: Vec<ColumnDoc>,
    label: Option<LabelDoc>,
}

#[derive(Deserialize)]
struct ColumnDoc {
    name: String,
    kind: String,
}

#[derive(Deserialize)]
struct LabelDoc {
    column: String,
    normal_values: Vec<String>,
}

/// Parses a schema document. Column order follows declaration order.
pub fn parse_schema(text: &str) -> Result<TableSchema, DataError> {
    let doc: SchemaDoc = toml::from_str(text).map_err(|e| DataError::Schema(e.to_string()))?;
    if doc.columns.is_empty() {
        return Err(DataError::Schema("columns section is empty".into()));
    }

    let mut seen = HashSet::new();
    let mut columns = Vec::with_capacity(doc.columns.len());
    for c in doc.columns {
        if !seen.insert(c.name.clone()) {
            return Err(DataError::DuplicateColumn(c.name));
        }
        let kind = match c.kind.as_str() {
            "categorical" => ColumnKind::Categorical,
            "continuous" => ColumnKind::Continuous,
            other => {
                return Err(DataError::UnknownKind {
                    column: c.name,
                    kind: other.to_string(),
                })
            }
        };
        columns.push(Column { name: c.name, kind });
    }

    let label = match doc.label {
        Some(l) => {
            if !columns.iter().any(|c| c.name == l.column) {
                return Err(DataError::Schema(format!(
                    "label column {:?} is not declared in columns",
                    l.column
                )));
            }
            if l.normal_values.is_empty() {
                return Err(DataError::Schema("label.normal_values is empty".into()));
            }
            Some(LabelSpec {
                column: l.column,
                normal_values: l.normal_values,
            })
        }
        None => None,
    };

    let schema = TableSchema { columns, label };
    if schema.feature_columns().count() == 0 {
        return Err(DataError::Schema(
            "schema needs at least one non-label column".into(),
        ));
    }
    Ok(schema)
}
