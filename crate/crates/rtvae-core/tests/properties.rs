//! Property tests for the numeric and data invariants.

use proptest::prelude::*;

use rtvae_core::data::{
    contaminate, encode, fit_encoder, ingest_reader, parse_schema, split, DecodedValue,
    EncodedDataset, FeatureColumn, Label, RawValue,
};
use rtvae_core::eval::{auc, ScoredSet};
use rtvae_core::numerics::{Matrix, Rng};

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(
        rows in 1usize..5,
        cols in 1usize..7,
        seed in any::<u64>(),
        low in -700.0f64..700.0,
        high in -700.0f64..700.0,
    ) {
        let (low, high) = if low <= high { (low, high) } else { (high, low) };
        let mut rng = Rng::new(seed);
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| rng.uniform_in(low, high + 1e-9))
            .collect();
        let m = Matrix::from_vec(rows, cols, data).unwrap();
        let s = m.softmax_rows();
        for r in 0..rows {
            let sum: f64 = s.row(r).iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12, "row {r} sums to {sum}");
            prop_assert!(s.row(r).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn auc_invariant_under_increasing_transforms(
        seed in any::<u64>(),
        n in 4usize..40,
    ) {
        let mut rng = Rng::new(seed);
        let scores: Vec<f64> = (0..n).map(|_| rng.uniform_in(-3.0, 3.0)).collect();
        let mut labels: Vec<Label> = (0..n)
            .map(|_| if rng.below(2) == 0 { Label::Normal } else { Label::Anomaly })
            .collect();
        labels[0] = Label::Normal;
        labels[1] = Label::Anomaly;

        let base = auc(&ScoredSet::new(scores.clone(), labels.clone()).unwrap()).unwrap();
        let transforms: [fn(f64) -> f64; 3] = [
            |v| 2.0 * v + 1.0,
            |v| v.exp(),
            |v| v.powi(3) + 0.5 * v,
        ];
        for (i, t) in transforms.iter().enumerate() {
            let mapped: Vec<f64> = scores.iter().map(|&v| t(v)).collect();
            let transformed = auc(&ScoredSet::new(mapped, labels.clone()).unwrap()).unwrap();
            prop_assert!(
                (base - transformed).abs() < 1e-12,
                "transform {i}: {base} vs {transformed}"
            );
        }
    }

    #[test]
    fn encode_decode_round_trip(
        seed in any::<u64>(),
        n in 1usize..30,
    ) {
        let schema = parse_schema(
            "[[columns]]\nname = \"kind\"\nkind = \"categorical\"\n\n\
             [[columns]]\nname = \"value\"\nkind = \"continuous\"\n",
        ).unwrap();
        let mut rng = Rng::new(seed);
        let categories = ["alpha", "beta", "gamma"];
        let csv: String = (0..n)
            .map(|_| {
                format!(
                    "{},{}\n",
                    categories[rng.below(3)],
                    rng.uniform_in(-100.0, 100.0)
                )
            })
            .collect();
        let table = ingest_reader(csv.as_bytes(), &schema, false).unwrap();
        let state = fit_encoder(&table).unwrap();
        let ds = encode(&table, &state).unwrap();

        for (r, row) in table.rows.iter().enumerate() {
            // each categorical block holds exactly one 1
            let block = &ds.x.row(r)[..ds.layout[0].width];
            let ones = block.iter().filter(|&&v| v == 1.0).count();
            let zeros = block.iter().filter(|&&v| v == 0.0).count();
            prop_assert_eq!(ones, 1);
            prop_assert_eq!(zeros, block.len() - 1);

            let decoded = state.decode_row(ds.x.row(r));
            match (&decoded[0], &row[0]) {
                (DecodedValue::Cat(Some(got)), RawValue::Cat(want)) => {
                    prop_assert_eq!(got.as_str(), want.as_str())
                }
                other => prop_assert!(false, "unexpected decode {:?}", other),
            }
            match (&decoded[1], &row[1]) {
                (DecodedValue::Cont(got), RawValue::Cont(want)) => {
                    prop_assert!((got - want).abs() < 1e-9)
                }
                other => prop_assert!(false, "unexpected decode {:?}", other),
            }
        }
    }

    #[test]
    fn split_partitions_multiset(
        seed in any::<u64>(),
        n in 4usize..60,
        fraction in 0.1f64..0.9,
    ) {
        let ds = indexed_dataset(n);
        let holdout_size = (fraction * n as f64).round() as usize;
        prop_assume!(holdout_size > 0 && holdout_size < n);
        let (train, holdout) = split(&ds, fraction, &mut Rng::new(seed)).unwrap();
        prop_assert_eq!(holdout.n_rows(), holdout_size);
        prop_assert_eq!(train.n_rows() + holdout.n_rows(), n);

        let mut seen: Vec<u64> = Vec::new();
        for part in [&train, &holdout] {
            for r in 0..part.n_rows() {
                seen.push(part.x.get(r, 0) as u64);
            }
        }
        seen.sort_unstable();
        let expected: Vec<u64> = (0..n as u64).collect();
        prop_assert_eq!(seen, expected, "split must be a disjoint partition");
    }

    #[test]
    fn contaminate_preserves_multisets_and_counts(
        seed in any::<u64>(),
        total in 2usize..50,
        rate in 0.0f64..0.9,
    ) {
        let normals = indexed_dataset(80);
        let anomalies = indexed_dataset_offset(40, 1000);
        let expected_anomalies = (rate * total as f64).round() as usize;
        prop_assume!(expected_anomalies <= 40 && total - expected_anomalies <= 80);

        let out = contaminate(&normals, &anomalies, rate, total, &mut Rng::new(seed)).unwrap();
        let labels = out.labels.clone().unwrap();
        let anomaly_count = labels.iter().filter(|l| **l == Label::Anomaly).count();
        prop_assert_eq!(anomaly_count, expected_anomalies);
        prop_assert_eq!(out.n_rows(), total);

        // rows drawn without replacement: ids are distinct and label-consistent
        let mut ids: Vec<u64> = Vec::new();
        for (r, label) in labels.iter().enumerate() {
            let id = out.x.get(r, 0) as u64;
            let is_anomaly = id >= 1000;
            prop_assert_eq!(*label == Label::Anomaly, is_anomaly);
            ids.push(id);
        }
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), total, "sampling must be without replacement");
    }
}

fn indexed_dataset(n: usize) -> EncodedDataset {
    indexed_dataset_offset(n, 0)
}

fn indexed_dataset_offset(n: usize, offset: u64) -> EncodedDataset {
    let data: Vec<f64> = (0..n).map(|i| (i as u64 + offset) as f64).collect();
    EncodedDataset {
        x: Matrix::from_vec(n, 1, data).unwrap(),
        layout: vec![FeatureColumn {
            name: "id".into(),
            kind: rtvae_core::data::ColumnKind::Continuous,
            offset: 0,
            width: 1,
        }],
        labels: None,
        fingerprint: "prop".into(),
    }
}
