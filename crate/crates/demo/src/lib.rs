//! Browser demo: correlation pruning on pasted data, signal recovery on a
//! small synthetic cohort, and a look at the generator's AR(1) traces.
//!
//! Each operation is a plain function returning JSON so it can be tested
//! natively; the `wasm_bindgen` wrappers only convert errors.

use facecue::dataset::{grouped_kfold, Class, LabelScheme};
use facecue::eval::{run_cv, CvOptions};
use facecue::featurize::prune_correlated;
use facecue::models::{self, impurity_importance, ClassifierSpec, ForestParams};
use facecue::pipeline::{dataset_from_synth, FeatureOptions};
use facecue::synth::{generate_subject, ClassShift, CohortSpec};
use facecue::Matrix;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn parse_table(text: &str) -> Result<(Vec<String>, Matrix), String> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines.next().ok_or("empty input")?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|_| format!("row {}: `{}` is not a number", i + 1, c.trim())))
            .collect::<Result<_, _>>()?;
        if row.len() != names.len() {
            return Err(format!("row {} has {} values, header has {}", i + 1, row.len(), names.len()));
        }
        rows.push(row);
    }
    Ok((names, Matrix::from_rows(&rows)))
}

/// Greedy correlation pruning of a CSV table (header row of names, numeric
/// rows). Returns kept and dropped columns with the partner that caused
/// each drop.
pub fn prune_table(csv_text: &str, threshold: f64) -> Result<Value, String> {
    let (names, m) = parse_table(csv_text)?;
    let res = prune_correlated(&m, &names, threshold).map_err(|e| e.to_string())?;
    Ok(json!({
        "threshold": threshold,
        "kept": res.kept_indices.iter().map(|&i| &names[i]).collect::<Vec<_>>(),
        "dropped": res.dropped.iter().map(|d| json!({
            "feature": names[d.index],
            "correlated_with": names[d.correlated_with],
            "abs_r": d.abs_r,
        })).collect::<Vec<_>>(),
    }))
}

/// Generates a cohort with a pose_Rx shift for Anxious subjects, then
/// cross-validates a random forest on the 1418 recording features.
pub fn recover_signal(n_subjects: usize, effect: f64, noise_sd: f64, seed: u64) -> Result<Value, String> {
    if !(10..=80).contains(&n_subjects) {
        return Err("subjects must be between 10 and 80".into());
    }
    let mut spec = CohortSpec {
        n_subjects,
        duration_s: 12.0,
        likert_distribution: [0.25, 0.25, 0.0, 0.25, 0.25],
        noise_sd,
        seed,
        ..Default::default()
    };
    spec.effect.insert(
        "pose_Rx".into(),
        ClassShift {
            anxious: effect,
            ..Default::default()
        },
    );
    let opts = FeatureOptions {
        trim_s: 10.0,
        ..FeatureOptions::default()
    };
    let data = dataset_from_synth(&spec, &opts, LabelScheme::BinaryMain)
        .map_err(|e| e.to_string())?
        .dataset;
    let d = data.feature_names.len();
    let rf = ClassifierSpec::random_forest(
        ForestParams {
            n_trees: 50,
            mtry: Some(d / 3),
            ..Default::default()
        },
        seed,
    );
    let plan = grouped_kfold(&data.subjects(), 5, seed).map_err(|e| e.to_string())?;
    let report = run_cv(&data, &plan, &rf, &CvOptions::default())
        .map_err(|e| e.to_string())?
        .report;

    let labels = data.label_indices();
    let model = models::fit(&rf, &data.features, &labels, data.classes().len()).map_err(|e| e.to_string())?;
    let importance = impurity_importance(&model).map_err(|e| e.to_string())?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    let anxious = data.samples.iter().filter(|s| s.label == Class::Anxious).count();
    Ok(json!({
        "n_subjects": n_subjects,
        "n_features": d,
        "anxious": anxious,
        "non_anxious": data.len() - anxious,
        "accuracy": report.averaged.accuracy,
        "f1": report.averaged.f1,
        "auc": report.averaged.auc,
        "per_fold_accuracy": report.per_fold.iter().map(|f| f.metrics.accuracy).collect::<Vec<_>>(),
        "top_features": order.iter().take(5).map(|&i| json!({
            "feature": data.feature_names[i],
            "importance": importance[i],
        })).collect::<Vec<_>>(),
    }))
}

/// The first subject's per-frame values of one column, plus the stationary
/// standard deviation the generator targets.
pub fn column_trace(column: &str, ar_coefficient: f64, noise_sd: f64, seconds: f64, seed: u64) -> Result<Value, String> {
    let spec = CohortSpec {
        n_subjects: 1,
        duration_s: seconds,
        ar_coefficient,
        noise_sd,
        seed,
        ..Default::default()
    };
    let subject = generate_subject(&spec, 0).map_err(|e| e.to_string())?;
    let c = subject
        .table
        .schema()
        .index_of(column)
        .ok_or_else(|| format!("unknown column `{column}`"))?;
    let values = subject.table.values().column(c);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt();
    Ok(json!({
        "column": column,
        "fps": spec.fps,
        "values": values,
        "sample_sd": sd,
        "stationary_sd": noise_sd / (1.0 - ar_coefficient * ar_coefficient).sqrt(),
    }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = pruneTable)]
pub fn prune_table_js(csv_text: &str, threshold: f64) -> Result<String, JsValue> {
    to_js(prune_table(csv_text, threshold))
}

#[wasm_bindgen(js_name = recoverSignal)]
pub fn recover_signal_js(n_subjects: u32, effect: f64, noise_sd: f64, seed: u32) -> Result<String, JsValue> {
    to_js(recover_signal(n_subjects as usize, effect, noise_sd, u64::from(seed)))
}

#[wasm_bindgen(js_name = columnTrace)]
pub fn column_trace_js(column: &str, ar_coefficient: f64, noise_sd: f64, seconds: f64, seed: u32) -> Result<String, JsValue> {
    to_js(column_trace(column, ar_coefficient, noise_sd, seconds, u64::from(seed)))
}
