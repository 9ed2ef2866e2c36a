//! The shipped dataset schemas parse and carry the documented column counts.

use std::path::Path;

use rtvae_core::data::{parse_schema, ColumnKind, TableSchema};

fn load(name: &str) -> TableSchema {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../schemas")
        .join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
    parse_schema(&text).unwrap_or_else(|e| panic!("{path:?}: {e}"))
}

fn feature_counts(schema: &TableSchema) -> (usize, usize) {
    let features: Vec<_> = schema.feature_columns().collect();
    let categorical = features
        .iter()
        .filter(|c| c.kind == ColumnKind::Categorical)
        .count();
    (features.len(), categorical)
}

#[test]
fn kddcup99_has_41_features_8_categorical() {
    let schema = load("kddcup99.toml");
    assert_eq!(feature_counts(&schema), (41, 8));
    assert_eq!(schema.label.as_ref().unwrap().normal_values, ["normal."]);
}

#[test]
fn nsl_kdd_has_41_features_8_categorical() {
    let schema = load("nsl_kdd.toml");
    assert_eq!(feature_counts(&schema), (41, 8));
    assert_eq!(schema.label.as_ref().unwrap().normal_values, ["normal"]);
}

#[test]
fn unsw_nb15_has_42_features_9_categorical() {
    let schema = load("unsw_nb15.toml");
    assert_eq!(feature_counts(&schema), (42, 9));
    assert_eq!(schema.label.as_ref().unwrap().column, "label");
}
