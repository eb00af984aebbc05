//! Property tests for ingest, featurization, dataset assembly and evaluation
//! invariants.

use std::collections::BTreeSet;

use facecue::dataset::{
    config_columns, grouped_kfold, Class, DatasetConfig, Demographics, LabelScheme, LabeledDataset, LabeledSample,
};
use facecue::eval::{ablation_pairwise, fold_columns, run_cv, CvOptions};
use facecue::featurize::{aggregate_full, chunk_and_flatten, prune_correlated, Stat, StdDivisor};
use facecue::models::{ClassifierSpec, TreeParams};
use facecue::openface::{
    format_sig9, parse_openface_csv, trim_to_duration, write_openface_csv, ColumnSchema, Education, FrameTable,
    Gender, HomeLocation,
};
use facecue::Matrix;
use proptest::prelude::*;

fn canonical_names() -> Vec<String> {
    ColumnSchema::canonical().names().map(String::from).collect()
}

/// A frame table over a random subset of canonical columns. `keep` picks
/// columns by index modulo the header width.
fn table_from(keep: &[usize], values: &[f64], n_frames: usize, fps: f64) -> FrameTable {
    let all = canonical_names();
    let picked: BTreeSet<usize> = keep.iter().map(|k| k % all.len()).collect();
    let names: Vec<&str> = picked.iter().map(|&i| all[i].as_str()).collect();
    let width = names.len();
    let data: Vec<f64> = (0..n_frames * width).map(|i| values[i % values.len()] * (1.0 + (i % 7) as f64)).collect();
    FrameTable::new("P", ColumnSchema::from_names(&names).unwrap(), fps, Matrix::from_vec(n_frames, width, data)).unwrap()
}

fn table_strategy() -> impl Strategy<Value = FrameTable> {
    (
        prop::collection::vec(0usize..714, 1..25),
        prop::collection::vec(-1e4f64..1e4, 1..40),
        2usize..50,
        prop::sample::select(vec![10.0, 20.0, 25.0, 30.0]),
    )
        .prop_map(|(keep, values, n, fps)| table_from(&keep, &values, n, fps))
}

fn write(table: &FrameTable) -> Vec<u8> {
    let mut out = Vec::new();
    write_openface_csv(table, &mut out).unwrap();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_bit_exact_after_rounding(table in table_strategy()) {
        let bytes = write(&table);
        let back = parse_openface_csv(bytes.as_slice(), "P", Some(table.fps())).unwrap();
        prop_assert_eq!(back.schema(), table.schema());
        for (a, b) in back.values().as_slice().iter().zip(table.values().as_slice()) {
            let rounded: f64 = format_sig9(*b).parse().unwrap();
            prop_assert_eq!(a.to_bits(), rounded.to_bits());
        }
        // A second pass is a fixed point.
        prop_assert_eq!(write(&back), bytes);
    }

    #[test]
    fn trimming_is_idempotent(table in table_strategy(), frac in 0.1f64..1.0) {
        let target = table.duration_s() * frac;
        if let Ok(once) = trim_to_duration(&table, target) {
            let twice = trim_to_duration(&once, target).unwrap();
            prop_assert_eq!(once.values(), twice.values());
        }
    }

    #[test]
    fn metadata_columns_do_not_affect_aggregation(table in table_strategy()) {
        let feature_cols = table.schema().feature_indices();
        prop_assume!(!feature_cols.is_empty());
        let names: Vec<&str> = feature_cols.iter().map(|&c| table.schema().name(c)).collect();
        let stripped = FrameTable::new(
            "P",
            ColumnSchema::from_names(&names).unwrap(),
            table.fps(),
            table.values().select_columns(&feature_cols),
        )
        .unwrap();
        let stats = [Stat::Mean, Stat::Std];
        let a = aggregate_full(&table, &stats, StdDivisor::Sample).unwrap();
        let b = aggregate_full(&stripped, &stats, StdDivisor::Sample).unwrap();
        prop_assert_eq!(a.feature_names, b.feature_names);
        prop_assert_eq!(a.values, b.values);
    }

    #[test]
    fn chunks_tile_a_prefix(table in table_strategy(), window_s in 0.1f64..1.5) {
        let Ok(set) = chunk_and_flatten(&table, window_s) else { return Ok(()) };
        prop_assert_eq!(set.vectors.len(), table.n_frames() / set.window_frames);
        let cols = table.schema().feature_indices();
        for (k, v) in set.vectors.iter().enumerate() {
            prop_assert_eq!(v.chunk_index, Some(k));
            let rows: Vec<usize> = (k * set.window_frames..(k + 1) * set.window_frames).collect();
            let block = table.values().select_rows(&rows);
            for (slot, &c) in cols.iter().enumerate() {
                let col = block.column(c);
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                prop_assert!((v.values[slot] - mean).abs() <= 1e-9 * mean.abs().max(1.0));
            }
        }
    }

    #[test]
    fn threshold_one_keeps_all_but_exact_duplicates(
        data in prop::collection::vec(-10.0f64..10.0, 24),
    ) {
        // Four generic columns of six rows plus an exact duplicate of the first.
        let mut rows: Vec<Vec<f64>> = data.chunks(4).map(<[f64]>::to_vec).collect();
        for r in &mut rows {
            let dup = r[0];
            r.push(dup);
        }
        let m = Matrix::from_rows(&rows);
        let names: Vec<String> = (0..5).map(|i| format!("f{i}")).collect();
        let res = prune_correlated(&m, &names, 1.0).unwrap();
        let distinct = (0..4).all(|c| m.column(c).iter().any(|&v| v != m.get(0, c)));
        prop_assume!(distinct);
        // |r| = 1 is not strictly greater than 1, so even the duplicate stays.
        prop_assert_eq!(res.kept_indices, vec![0, 1, 2, 3, 4]);
    }
}

// ---------------------------------------------------------------------------

fn demographics(i: usize) -> Demographics {
    Demographics {
        gender: if i % 2 == 0 { Gender::Male } else { Gender::Female },
        education: if i % 3 == 0 { Education::Undergraduate } else { Education::Graduate },
        home_location: HomeLocation::Urban,
    }
}

/// Recording-level dataset with `n_mean` mean columns and as many std
/// columns; Likert scores cycle through 1..=5.
fn dataset(values: &[f64], n_subjects: usize, n_mean: usize) -> LabeledDataset {
    let width = 2 * n_mean;
    let data: Vec<f64> = (0..n_subjects * width)
        .map(|i| values[i % values.len()] + ((i * 7919) % 13) as f64 * 0.37)
        .collect();
    let names = (0..n_mean)
        .map(|i| format!("f{i}__mean"))
        .chain((0..n_mean).map(|i| format!("f{i}__std")))
        .collect();
    let samples = (0..n_subjects)
        .map(|s| {
            let score = (s % 5) as u8 + 1;
            LabeledSample {
                subject_id: format!("P{s:02}"),
                chunk_index: None,
                self_report: score,
                label: facecue::dataset::map_label(score, LabelScheme::Multiclass).unwrap().unwrap(),
                demographics: demographics(s),
            }
        })
        .collect();
    LabeledDataset {
        scheme: LabelScheme::Multiclass,
        features: Matrix::from_vec(n_subjects, width, data),
        feature_names: names,
        n_mean,
        samples,
    }
}

fn dataset_strategy() -> impl Strategy<Value = LabeledDataset> {
    (prop::collection::vec(-5.0f64..5.0, 8..60), 10usize..25, 2usize..6)
        .prop_map(|(v, n, d)| dataset(&v, n, d))
}

fn tree() -> ClassifierSpec {
    ClassifierSpec::decision_tree(TreeParams { max_depth: Some(3), ..Default::default() })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reduced_configs_are_subsets(data in dataset_strategy(), threshold in 0.2f64..1.0) {
        let rows: Vec<usize> = (0..data.len()).collect();
        let cols = |c| config_columns(&data.features, &data.feature_names, data.n_mean, c, threshold, &rows).unwrap();
        let subset = |a: Vec<usize>, b: Vec<usize>| a.iter().all(|x| b.contains(x));
        prop_assert!(subset(cols(DatasetConfig::D7), cols(DatasetConfig::D5)));
        prop_assert!(subset(cols(DatasetConfig::D2), cols(DatasetConfig::D1)));
        prop_assert!(subset(cols(DatasetConfig::D4), cols(DatasetConfig::D3)));
    }

    #[test]
    fn pairwise_relabel_keeps_features(data in dataset_strategy()) {
        for drop in [Class::Anxious, Class::Neutral, Class::NonAnxious] {
            let sub = data.relabel(LabelScheme::Pairwise { drop }).unwrap();
            let mut r = 0;
            for (i, s) in data.samples.iter().enumerate() {
                if s.label == drop {
                    continue;
                }
                prop_assert_eq!(sub.features.row(r), data.features.row(i));
                prop_assert_eq!(&sub.samples[r].subject_id, &s.subject_id);
                r += 1;
            }
            prop_assert_eq!(r, sub.len());
        }
    }

    #[test]
    fn pruning_never_sees_test_rows(data in dataset_strategy(), seed in 0u64..1000, noise in -50.0f64..50.0) {
        let plan = grouped_kfold(&data.subjects(), 3, seed).unwrap();
        let opts = CvOptions { config: DatasetConfig::D7, threshold: 0.6, ..Default::default() };
        for f in 0..plan.k {
            let (train, test): (Vec<usize>, Vec<usize>) =
                (0..data.len()).partition(|&i| plan.fold_of(&data.samples[i].subject_id) != Some(f));
            let before = fold_columns(&data, &opts, &train).unwrap();
            let mut mutated = data.clone();
            for &r in &test {
                for v in mutated.features.row_mut(r) {
                    *v = *v * noise + noise;
                }
            }
            prop_assert_eq!(fold_columns(&mutated, &opts, &train).unwrap(), before);
        }
    }

    #[test]
    fn averaged_accuracy_is_fold_mean(data in dataset_strategy(), seed in 0u64..1000) {
        let plan = grouped_kfold(&data.subjects(), 4, seed).unwrap();
        let report = run_cv(&data, &plan, &tree(), &CvOptions::default()).unwrap().report;
        let mean = report.per_fold.iter().map(|f| f.metrics.accuracy).sum::<f64>() / report.per_fold.len() as f64;
        prop_assert_eq!(report.averaged.accuracy.to_bits(), mean.to_bits());
    }

    #[test]
    fn pairwise_ablation_ignores_excluded_class_features(data in dataset_strategy(), scale in 2.0f64..100.0) {
        let plan = grouped_kfold(&data.subjects(), 3, 5).unwrap();
        let opts = CvOptions { config: DatasetConfig::D6, ..Default::default() };
        let base = ablation_pairwise(&data, &plan, &tree(), &opts, false).unwrap();
        for (row_index, drop) in [Class::Neutral, Class::NonAnxious, Class::Anxious].into_iter().enumerate() {
            let mut mutated = data.clone();
            for i in 0..data.len() {
                if data.samples[i].label == drop {
                    for v in mutated.features.row_mut(i) {
                        *v = -*v * scale;
                    }
                }
            }
            let again = ablation_pairwise(&mutated, &plan, &tree(), &opts, false).unwrap();
            prop_assert_eq!(&again.rows[row_index], &base.rows[row_index]);
        }
    }
}
