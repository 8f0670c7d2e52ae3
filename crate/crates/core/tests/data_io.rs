//! Synthetic generation, splits and file loading.

mod common;

use std::path::PathBuf;

use gate_core::data::{
    gen_synthetic, initial_split, write_manifest, CsvSchema, DataError, DataPool, DatasetManifest,
    MeanMode, SplitSpec, SyntheticConfig, TrueModelSpec,
};
use gate_core::driver::{run_gate, GateConfig};

use common::*;

fn column_mean(pool: &DataPool<f64>, j: usize) -> f64 {
    (0..pool.n_rows()).map(|i| pool.x().get(i, j)).sum::<f64>() / pool.n_rows() as f64
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn synthetic_columns_have_unit_variance_and_shared_fixed_means() {
    let truth = TrueModelSpec::<f64>::case(1, 12).unwrap();
    let cfg = SyntheticConfig {
        n: 20_000,
        test_size: 1000,
        mean_mode: MeanMode::Fixed,
    };
    let a = gen_synthetic(&truth, &cfg, 5, 0).unwrap();
    let b = gen_synthetic(&truth, &cfg, 5, 1).unwrap();
    let n = a.n_rows() as f64;
    for j in 1..12 {
        let (ma, mb) = (column_mean(&a, j), column_mean(&b, j));
        assert!(
            (ma - mb).abs() <= 4.0 * (2.0 / n).sqrt(),
            "column {j}: {ma} vs {mb}"
        );
        assert!(ma.abs() <= 1.0 + 4.0 / n.sqrt());
        let var = (0..a.n_rows())
            .map(|i| (a.x().get(i, j) - ma).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        assert!((var - 1.0).abs() <= 0.06, "column {j} variance {var}");
    }
    assert!((0..a.n_rows()).all(|i| a.x().get(i, 0) == 1.0));
    assert_ne!(a.x().as_slice(), b.x().as_slice());
}

#[test]
fn synthetic_labels_are_calibrated_by_decile() {
    let truth = TrueModelSpec::<f64>::case(1, 20).unwrap();
    let cfg = SyntheticConfig {
        n: 20_000,
        test_size: 1000,
        ..Default::default()
    };
    let pool = gen_synthetic(&truth, &cfg, 9, 0).unwrap();
    let all: Vec<usize> = (0..pool.n_rows()).collect();
    let y = pool.labels_for(&all);
    let mut probs: Vec<(f64, u8)> = all
        .iter()
        .map(|&i| {
            let eta: f64 = truth
                .beta_true
                .iter()
                .enumerate()
                .map(|(j, b)| pool.x().get(i, j) * b)
                .sum();
            (logistic(eta), y[i])
        })
        .collect();
    probs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for decile in probs.chunks(probs.len() / 10) {
        let m = decile.len() as f64;
        let p_bar = decile.iter().map(|d| d.0).sum::<f64>() / m;
        let y_bar = decile.iter().map(|d| f64::from(d.1)).sum::<f64>() / m;
        let se = (decile.iter().map(|d| d.0 * (1.0 - d.0)).sum::<f64>()).sqrt() / m;
        assert!(
            (y_bar - p_bar).abs() <= 3.0 * se + 1e-12,
            "decile {p_bar}: observed {y_bar}"
        );
    }
}

#[test]
fn initial_split_draws_distinct_training_subjects() {
    let truth = TrueModelSpec::<f64>::case(2, 5).unwrap();
    let cfg = SyntheticConfig {
        n: 500,
        test_size: 200,
        ..Default::default()
    };
    let pool = gen_synthetic(&truth, &cfg, 1, 0).unwrap();
    assert_eq!(pool.train_idx().len(), 300);
    assert_eq!(pool.test_idx().len(), 200);
    let s = initial_split(&pool, 60, 1, 0).unwrap();
    let mut l = s.labeled().to_vec();
    assert_eq!(l.len(), 60);
    assert!(l.iter().all(|i| pool.train_idx().contains(i)));
    l.sort_unstable();
    l.dedup();
    assert_eq!(l.len(), 60);
    assert_eq!(s.unlabeled().len(), 240);
    assert_eq!(
        initial_split(&pool, 60, 1, 0).unwrap().labeled(),
        s.labeled()
    );
    assert_ne!(
        initial_split(&pool, 60, 1, 1).unwrap().labeled(),
        s.labeled()
    );
    assert!(matches!(
        initial_split(&pool, 301, 1, 0),
        Err(DataError::InsufficientPool {
            needed: 301,
            available: 300
        })
    ));
}

/// Labels counted straight from the raw text.
fn raw_class_counts(path: &PathBuf) -> (usize, usize, usize) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|&h| h == "CLASS").unwrap();
    let (mut a, mut b) = (0, 0);
    for line in lines {
        match line.split(',').nth(col).unwrap() {
            "A" => a += 1,
            "B" => b += 1,
            other => panic!("unexpected class {other}"),
        }
    }
    (a, b, header.len() - 1)
}

#[test]
fn wave_fixture_loads_with_letter_labels() {
    let path = fixture("wave_mini.csv");
    let (neg, pos, features) = raw_class_counts(&path);
    let manifest = DatasetManifest {
        path: path.clone(),
        schema: CsvSchema {
            positive_label: Some("B".into()),
            negative_label: Some("A".into()),
            ..CsvSchema::with_label("CLASS")
        },
        split: SplitSpec::Leading { train_size: 150 },
        seed: 0,
    };
    let pool: DataPool<f64> = manifest.load().unwrap();
    assert_eq!(pool.n_rows(), neg + pos);
    assert_eq!(pool.n_vars(), features + 1);
    assert_eq!(pool.intercept(), Some(0));
    assert_eq!(pool.var_names()[1], "V1");
    assert_eq!(pool.class_counts(), (neg, pos));
    assert_eq!(pool.train_idx().len(), 150);

    let swapped = DatasetManifest {
        schema: CsvSchema {
            positive_label: Some("A".into()),
            negative_label: Some("B".into()),
            ..CsvSchema::with_label("CLASS")
        },
        ..manifest.clone()
    };
    let flipped: DataPool<f64> = swapped.load().unwrap();
    assert_eq!(flipped.class_counts(), (pos, neg));

    let strict = DatasetManifest {
        schema: CsvSchema {
            positive_label: Some("B".into()),
            negative_label: Some("C".into()),
            ..CsvSchema::with_label("CLASS")
        },
        ..manifest
    };
    assert!(matches!(
        strict.load::<f64>(),
        Err(DataError::NonBinaryLabel { .. })
    ));
}

#[test]
fn gate_runs_on_the_wave_fixture() {
    let manifest = DatasetManifest {
        path: fixture("wave_mini.csv"),
        schema: CsvSchema {
            positive_label: Some("B".into()),
            ..CsvSchema::with_label("CLASS")
        },
        split: SplitSpec::RandomTrain { train_size: 150 },
        seed: 2,
    };
    let pool: DataPool<f64> = manifest.load().unwrap();
    let r = run_gate(
        &GateConfig {
            n0: 30,
            n_q: 10,
            h: 20,
            seed: 2,
            ..Default::default()
        },
        &pool,
    )
    .unwrap();
    assert!(r.selection.is_none());
    assert!(r.labeled_count <= 150);
    assert!(r.test.acc >= 0.5);
}

#[test]
fn manifest_round_trip_resolves_relative_paths() {
    let truth = TrueModelSpec::<f64>::case(3, 6).unwrap();
    let pool = gen_synthetic(
        &truth,
        &SyntheticConfig {
            n: 120,
            test_size: 20,
            ..Default::default()
        },
        3,
        0,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    pool.write_csv(&dir.path().join("pool.csv"), "y").unwrap();
    let manifest = DatasetManifest {
        path: PathBuf::from("pool.csv"),
        schema: CsvSchema::with_label("y"),
        split: SplitSpec::Leading { train_size: 100 },
        seed: 0,
    };
    let mpath = dir.path().join("pool.json");
    write_manifest(&manifest, &mpath).unwrap();
    let back = DatasetManifest::from_file(&mpath).unwrap();
    assert_eq!(back.path, dir.path().join("pool.csv"));
    assert_eq!(back.schema, manifest.schema);
    let loaded: DataPool<f64> = back.load().unwrap();
    assert_eq!(loaded.x().as_slice(), pool.x().as_slice());
    assert_eq!(loaded.intercept(), Some(0));
    assert_eq!(loaded.var_names()[1..], pool.var_names()[1..]);
    assert_eq!(loaded.test_idx(), (100..120).collect::<Vec<_>>());

    let missing = DatasetManifest::from_file(&dir.path().join("absent.json"));
    assert!(matches!(missing, Err(DataError::Io { .. })));
}
