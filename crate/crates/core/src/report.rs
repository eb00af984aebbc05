//! Serialization of experiment results to JSON, CSV and markdown.

use std::fmt::Write as _;

use serde::Serialize;

use crate::eval::{AveragedMetrics, FoldMetrics, MetricsReport, PooledMetrics};
use crate::pipeline::{AblationEntry, ImportanceEntry, RunReport};

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn fixed(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"))
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

const METRIC_COLUMNS: [&str; 8] = [
    "fold",
    "n_train",
    "n_test",
    "n_features",
    "accuracy",
    "f1",
    "macro_f1",
    "auc",
];

fn fold_cells(f: &FoldMetrics) -> Vec<String> {
    let m: &PooledMetrics = &f.metrics;
    vec![
        f.fold.to_string(),
        f.n_train.to_string(),
        f.n_test.to_string(),
        f.n_features.to_string(),
        m.accuracy.to_string(),
        m.f1.to_string(),
        m.macro_f1.to_string(),
        opt(m.auc),
    ]
}

fn mean_cells(a: &AveragedMetrics) -> Vec<String> {
    vec![
        "mean".into(),
        String::new(),
        String::new(),
        a.n_features.to_string(),
        a.accuracy.to_string(),
        a.f1.to_string(),
        a.macro_f1.to_string(),
        opt(a.auc),
    ]
}

/// Per-fold rows followed by a `mean` row for each report.
fn report_rows(prefix: &[String], r: &MetricsReport) -> Vec<Vec<String>> {
    r.per_fold
        .iter()
        .map(fold_cells)
        .chain(std::iter::once(mean_cells(&r.averaged)))
        .map(|cells| prefix.iter().cloned().chain(cells).collect())
        .collect()
}

/// One row per (dataset configuration, classifier, fold), plus a `mean` row
/// per condition.
pub fn run_csv(rep: &RunReport) -> String {
    let mut header = vec!["dataset_config", "classifier"];
    header.extend(METRIC_COLUMNS);
    let rows = rep
        .rows
        .iter()
        .flat_map(|row| report_rows(&[row.dataset_config.to_string(), row.classifier.clone()], &row.report))
        .collect();
    csv_string(&header, rows)
}

/// Results table with Dataset, Description, # Features, Classifier, Accuracy,
/// F1 and AUC columns, followed by demographic slices.
pub fn run_markdown(rep: &RunReport) -> String {
    let mut s = String::new();
    let classes = rep.rows.first().map(|r| r.report.class_list.join(", ")).unwrap_or_default();
    let _ = writeln!(s, "# Results\n");
    let _ = writeln!(
        s,
        "Label scheme `{}` ({classes}), {:?} granularity, {} subjects, {} samples, {}-fold subject-grouped CV.\n",
        rep.label_scheme, rep.granularity, rep.n_subjects, rep.n_samples, rep.k
    );
    let _ = writeln!(s, "| Dataset | Description | # Features | Classifier | Accuracy | F1 | AUC |");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|");
    for row in &rep.rows {
        let a = &row.report.averaged;
        let _ = writeln!(
            s,
            "| {} | {} | {:.1} | {} | {:.3} | {:.3} | {} |",
            row.dataset_config,
            row.description,
            a.n_features,
            row.classifier,
            a.accuracy,
            a.f1,
            fixed(a.auc)
        );
    }
    let _ = writeln!(s, "\nF1 is {}.", f1_note(rep.rows.first().map(|r| &r.report)));

    for row in &rep.rows {
        for slice in &row.slices {
            let _ = writeln!(s, "\n## {} / {} by {}\n", row.dataset_config, row.classifier, slice.attribute.name());
            let _ = writeln!(s, "| Group | Samples | Accuracy | F1 | AUC |");
            let _ = writeln!(s, "|---|---|---|---|---|");
            for g in &slice.groups {
                let m = &g.metrics;
                let _ = writeln!(s, "| {} | {} | {:.3} | {:.3} | {} |", g.group, m.n_samples, m.accuracy, m.f1, fixed(m.auc));
            }
            for n in &slice.notices {
                let _ = writeln!(s, "\n_{n}_");
            }
        }
    }
    if !rep.excluded.is_empty() {
        let _ = writeln!(s, "\n## Excluded recordings\n");
        for e in &rep.excluded {
            let _ = writeln!(s, "- {}: {}", e.subject_id, e.reason);
        }
    }
    s
}

fn f1_note(r: Option<&MetricsReport>) -> String {
    match r {
        Some(r) if r.class_list.len() == 2 => format!("the F1 of the `{}` class", r.class_list[0]),
        _ => "macro-averaged over classes".into(),
    }
}

pub fn ablation_csv(entries: &[AblationEntry]) -> String {
    let mut header = vec!["dataset_config", "classifier", "study", "condition"];
    header.extend(METRIC_COLUMNS);
    let rows = entries
        .iter()
        .flat_map(|e| {
            e.report.rows.iter().flat_map(move |row| {
                report_rows(
                    &[
                        e.dataset_config.to_string(),
                        e.classifier.clone(),
                        e.report.study.name().to_string(),
                        row.condition.clone(),
                    ],
                    &row.report,
                )
            })
        })
        .collect();
    csv_string(&header, rows)
}

pub fn ablation_markdown(entries: &[AblationEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        let _ = writeln!(s, "## {} / {} ({} ablation)\n", e.dataset_config, e.classifier, e.report.study.name());
        let _ = writeln!(s, "| Condition | # Features | Accuracy | F1 | AUC |");
        let _ = writeln!(s, "|---|---|---|---|---|");
        for row in &e.report.rows {
            let a = &row.report.averaged;
            let _ = writeln!(
                s,
                "| {} | {:.1} | {:.3} | {:.3} | {} |",
                row.condition,
                a.n_features,
                a.accuracy,
                a.f1,
                fixed(a.auc)
            );
        }
        s.push('\n');
    }
    s
}

/// Long format: one row per (condition, feature) with its rank.
pub fn importance_csv(entries: &[ImportanceEntry], impurity: bool) -> String {
    let header = ["dataset_config", "classifier", "rank", "feature", "score", "std"];
    let mut rows = Vec::new();
    for e in entries {
        let table = if impurity { e.impurity.as_deref() } else { Some(e.permutation.as_slice()) };
        for (rank, r) in table.unwrap_or_default().iter().enumerate() {
            rows.push(vec![
                e.dataset_config.to_string(),
                e.classifier.clone(),
                (rank + 1).to_string(),
                r.feature.clone(),
                r.score.to_string(),
                opt(r.std),
            ]);
        }
    }
    csv_string(&header, rows)
}

pub fn importance_markdown(entries: &[ImportanceEntry]) -> String {
    const TOP: usize = 20;
    let mut s = String::new();
    for e in entries {
        let _ = writeln!(s, "## {} / {} ({} features)\n", e.dataset_config, e.classifier, e.n_features);
        for n in &e.notices {
            let _ = writeln!(s, "_{n}_\n");
        }
        if let Some(imp) = &e.impurity {
            let _ = writeln!(s, "Impurity importance (top {TOP}):\n");
            let _ = writeln!(s, "| Rank | Feature | Score |");
            let _ = writeln!(s, "|---|---|---|");
            for (i, r) in imp.iter().take(TOP).enumerate() {
                let _ = writeln!(s, "| {} | {} | {:.4} |", i + 1, r.feature, r.score);
            }
            s.push('\n');
        }
        let _ = writeln!(s, "Permutation importance, held-out folds, {:?} drop (top {TOP}):\n", e.permutation_metric);
        let _ = writeln!(s, "| Rank | Feature | Mean drop | Std |");
        let _ = writeln!(s, "|---|---|---|---|");
        for (i, r) in e.permutation.iter().take(TOP).enumerate() {
            let _ = writeln!(s, "| {} | {} | {:.4} | {:.4} |", i + 1, r.feature, r.score, r.std.unwrap_or(0.0));
        }
        s.push('\n');
    }
    s
}
