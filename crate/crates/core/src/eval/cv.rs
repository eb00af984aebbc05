use serde::{Deserialize, Serialize};

use super::metrics::{auc_from_proba, metrics_from_confusion, ConfusionMatrix};
use super::EvalError;
use crate::dataset::{config_columns, DatasetConfig, Demographics, FoldPlan, LabeledDataset};
use crate::models::{self, ClassifierSpec};
use crate::{par, seed};

/// Where correlation pruning is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneScope {
    /// On each training fold only.
    #[default]
    PerFold,
    /// Once on all samples before splitting.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub config: DatasetConfig,
    pub threshold: f64,
    pub prune_scope: PruneScope,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            config: DatasetConfig::D5,
            threshold: 0.75,
            prune_scope: PruneScope::PerFold,
        }
    }
}

/// Metrics over one set of predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledMetrics {
    pub n_samples: usize,
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1_per_class: Vec<f64>,
    pub macro_f1: f64,
    /// First-class F1 for two-class problems, macro F1 otherwise.
    pub f1: f64,
    pub auc: Option<f64>,
    pub confusion: ConfusionMatrix,
}

pub fn pooled_metrics(
    y_true: &[usize],
    y_pred: &[usize],
    proba: &[Vec<f64>],
    class_list: &[String],
) -> Result<PooledMetrics, EvalError> {
    let confusion = ConfusionMatrix::from_indices(y_true, y_pred, class_list)?;
    let m = metrics_from_confusion(&confusion)?;
    let f1 = if class_list.len() == 2 { m.f1[0] } else { m.macro_f1 };
    Ok(PooledMetrics {
        n_samples: y_true.len(),
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        f1_per_class: m.f1,
        macro_f1: m.macro_f1,
        f1,
        auc: auc_from_proba(proba, y_true, class_list.len()),
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
    pub test_subjects: Vec<String>,
    #[serde(flatten)]
    pub metrics: PooledMetrics,
}

/// Unweighted means over folds. `auc` averages the folds where it is
/// defined; `auc_folds` says how many.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedMetrics {
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1_per_class: Vec<f64>,
    pub macro_f1: f64,
    pub f1: f64,
    pub auc: Option<f64>,
    pub auc_folds: usize,
    pub n_features: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub class_list: Vec<String>,
    /// `"positive_class"` (first class) or `"macro"`.
    pub f1_kind: String,
    pub n_folds: usize,
    pub per_fold: Vec<FoldMetrics>,
    pub averaged: AveragedMetrics,
}

/// One held-out prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample: usize,
    pub fold: usize,
    pub subject_id: String,
    pub chunk_index: Option<usize>,
    pub demographics: Demographics,
    pub y_true: usize,
    pub y_pred: usize,
    pub proba: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub report: MetricsReport,
    /// Sorted by sample index.
    pub predictions: Vec<Prediction>,
    /// Full-layout columns used by each fold.
    pub fold_columns: Vec<Vec<usize>>,
}

/// Row indices of one fold's training and test sides.
pub(crate) type Split = (Vec<usize>, Vec<usize>);

/// (train rows, test rows) per fold.
pub(crate) fn partition(data: &LabeledDataset, plan: &FoldPlan) -> Result<Vec<Split>, EvalError> {
    let mut parts = vec![(Vec::new(), Vec::new()); plan.k];
    let mut folds = Vec::with_capacity(data.len());
    for s in &data.samples {
        folds.push(
            plan.fold_of(&s.subject_id)
                .ok_or_else(|| EvalError::FoldCoverage(s.subject_id.clone()))?,
        );
    }
    for (f, part) in parts.iter_mut().enumerate() {
        for (i, &fi) in folds.iter().enumerate() {
            if fi == f {
                part.1.push(i);
            } else {
                part.0.push(i);
            }
        }
    }
    Ok(parts)
}

/// Columns for one fold, with pruning fitted on `train_rows` only.
pub fn fold_columns(data: &LabeledDataset, opts: &CvOptions, train_rows: &[usize]) -> Result<Vec<usize>, EvalError> {
    Ok(config_columns(
        &data.features,
        &data.feature_names,
        data.n_mean,
        opts.config,
        opts.threshold,
        train_rows,
    )?)
}

pub(crate) fn base_columns(
    data: &LabeledDataset,
    opts: &CvOptions,
    parts: &[(Vec<usize>, Vec<usize>)],
) -> Result<Vec<Vec<usize>>, EvalError> {
    match opts.prune_scope {
        PruneScope::Global => {
            let all: Vec<usize> = (0..data.len()).collect();
            let cols = fold_columns(data, opts, &all)?;
            Ok(vec![cols; parts.len()])
        }
        PruneScope::PerFold => par::map_range(parts.len(), |f| fold_columns(data, opts, &parts[f].0))
            .into_iter()
            .collect(),
    }
}

pub(crate) fn fold_spec(spec: &ClassifierSpec, fold: usize) -> ClassifierSpec {
    ClassifierSpec {
        seed: seed::derive(spec.seed, fold as u64),
        ..spec.clone()
    }
}

pub(crate) struct FoldResult {
    pub metrics: FoldMetrics,
    pub predictions: Vec<Prediction>,
}

/// Trains on `train` and scores `test`, both restricted to `cols`.
pub(crate) fn evaluate_fold(
    data: &LabeledDataset,
    labels: &[usize],
    cols: &[usize],
    (train, test): (&[usize], &[usize]),
    spec: &ClassifierSpec,
    fold: usize,
) -> Result<FoldResult, EvalError> {
    let class_list: Vec<String> = data.classes().iter().map(|c| c.name().to_string()).collect();
    let x = data.features.select_columns(cols);
    let y_train: Vec<usize> = train.iter().map(|&r| labels[r]).collect();
    let model = models::fit(&fold_spec(spec, fold), &x.select_rows(train), &y_train, class_list.len())?;
    let proba = model.predict_proba(&x.select_rows(test))?;
    let y_pred: Vec<usize> = proba.iter().map(|p| models::argmax(p)).collect();
    let y_true: Vec<usize> = test.iter().map(|&r| labels[r]).collect();
    let metrics = pooled_metrics(&y_true, &y_pred, &proba, &class_list)?;
    let mut test_subjects: Vec<String> = test.iter().map(|&r| data.samples[r].subject_id.clone()).collect();
    test_subjects.dedup();
    test_subjects.sort();
    test_subjects.dedup();
    let predictions = test
        .iter()
        .zip(proba)
        .zip(&y_pred)
        .map(|((&r, p), &yp)| {
            let s = &data.samples[r];
            Prediction {
                sample: r,
                fold,
                subject_id: s.subject_id.clone(),
                chunk_index: s.chunk_index,
                demographics: s.demographics,
                y_true: labels[r],
                y_pred: yp,
                proba: p,
            }
        })
        .collect();
    Ok(FoldResult {
        metrics: FoldMetrics {
            fold,
            n_train: train.len(),
            n_test: test.len(),
            n_features: cols.len(),
            test_subjects,
            metrics,
        },
        predictions,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    sum / n as f64
}

fn mean_vec(rows: &[&[f64]]) -> Vec<f64> {
    let width = rows.first().map_or(0, |r| r.len());
    (0..width).map(|j| mean(rows.iter().map(|r| r[j]))).collect()
}

pub(crate) fn assemble(
    data: &LabeledDataset,
    results: Vec<FoldResult>,
    fold_columns: Vec<Vec<usize>>,
) -> CvOutcome {
    let class_list: Vec<String> = data.classes().iter().map(|c| c.name().to_string()).collect();
    let per_fold: Vec<FoldMetrics> = results.iter().map(|r| r.metrics.clone()).collect();
    let m: Vec<&PooledMetrics> = per_fold.iter().map(|f| &f.metrics).collect();
    let aucs: Vec<f64> = m.iter().filter_map(|f| f.auc).collect();
    let averaged = AveragedMetrics {
        accuracy: mean(m.iter().map(|f| f.accuracy)),
        precision: mean_vec(&m.iter().map(|f| f.precision.as_slice()).collect::<Vec<_>>()),
        recall: mean_vec(&m.iter().map(|f| f.recall.as_slice()).collect::<Vec<_>>()),
        f1_per_class: mean_vec(&m.iter().map(|f| f.f1_per_class.as_slice()).collect::<Vec<_>>()),
        macro_f1: mean(m.iter().map(|f| f.macro_f1)),
        f1: mean(m.iter().map(|f| f.f1)),
        auc: (!aucs.is_empty()).then(|| mean(aucs.iter().copied())),
        auc_folds: aucs.len(),
        n_features: mean(per_fold.iter().map(|f| f.n_features as f64)),
    };
    let mut predictions: Vec<Prediction> = results.into_iter().flat_map(|r| r.predictions).collect();
    predictions.sort_by_key(|p| p.sample);
    CvOutcome {
        report: MetricsReport {
            f1_kind: if class_list.len() == 2 { "positive_class" } else { "macro" }.to_string(),
            class_list,
            n_folds: per_fold.len(),
            per_fold,
            averaged,
        },
        predictions,
        fold_columns,
    }
}

/// Trains on the out-of-fold samples and evaluates on each fold in turn.
/// Pruning is fitted per training fold unless `opts.prune_scope` is
/// global; fold `f` trains with seed `derive(spec.seed, f)`.
pub fn run_cv(
    data: &LabeledDataset,
    plan: &FoldPlan,
    spec: &ClassifierSpec,
    opts: &CvOptions,
) -> Result<CvOutcome, EvalError> {
    let parts = partition(data, plan)?;
    let cols = base_columns(data, opts, &parts)?;
    let labels = data.label_indices();
    let results: Vec<FoldResult> = par::map_range(parts.len(), |f| {
        evaluate_fold(data, &labels, &cols[f], (&parts[f].0, &parts[f].1), spec, f)
    })
    .into_iter()
    .collect::<Result<_, _>>()?;
    Ok(assemble(data, results, cols))
}
