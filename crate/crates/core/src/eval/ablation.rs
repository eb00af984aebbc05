use serde::{Deserialize, Serialize};

use super::cv::{assemble, base_columns, evaluate_fold, fold_spec, partition, run_cv, CvOptions, FoldResult, MetricsReport};
use super::EvalError;
use crate::dataset::{grouped_kfold, grouped_kfold_stratified, Class, FoldPlan, LabelScheme, LabeledDataset};
use crate::featurize::split_feature_name;
use crate::models::{self, impurity_importance, ClassifierSpec, ForestParams, ModelParams};
use crate::openface::{classify_column, FeatureCategory};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationStudy {
    TopK,
    Category,
    Pairwise,
}

impl AblationStudy {
    pub fn name(self) -> &'static str {
        match self {
            AblationStudy::TopK => "topk",
            AblationStudy::Category => "category",
            AblationStudy::Pairwise => "pairwise",
        }
    }
}

impl std::str::FromStr for AblationStudy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "topk" | "top_k" => Ok(AblationStudy::TopK),
            "category" => Ok(AblationStudy::Category),
            "pairwise" => Ok(AblationStudy::Pairwise),
            _ => Err(format!("unknown study `{s}` (expected topk, category or pairwise)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub condition: String,
    /// Design-matrix width in each fold.
    pub feature_counts: Vec<usize>,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub study: AblationStudy,
    pub rows: Vec<AblationRow>,
}

fn row(condition: String, report: MetricsReport) -> AblationRow {
    AblationRow {
        condition,
        feature_counts: report.per_fold.iter().map(|f| f.n_features).collect(),
        report,
    }
}

/// 0.1, 0.2, ..., 0.9.
pub fn default_fractions() -> Vec<f64> {
    (1..=9).map(|i| f64::from(i) / 10.0).collect()
}

/// `ceil(f × d)`, clamped to `1..=d`. A small tolerance keeps products such as
/// `0.7 × 10` from rounding up past the exact value.
pub fn topk_count(fraction: f64, d: usize) -> usize {
    ((fraction * d as f64 - 1e-9).ceil().max(1.0) as usize).min(d)
}

/// Keeps the top `ceil(f × d)` features of each training fold, ranked by the
/// impurity importance of a forest fitted on that fold, and re-runs the
/// evaluation. The ranking forest is the classifier itself when it is a
/// random forest (same fold seed), otherwise a default forest.
pub fn ablation_topk(
    data: &LabeledDataset,
    plan: &FoldPlan,
    spec: &ClassifierSpec,
    opts: &CvOptions,
    fractions: &[f64],
) -> Result<AblationReport, EvalError> {
    if !spec.is_tree_based() {
        return Err(EvalError::NotTreeBased(spec.kind_name()));
    }
    let parts = partition(data, plan)?;
    let cols = base_columns(data, opts, &parts)?;
    let labels = data.label_indices();
    let n_classes = data.classes().len();

    // Importance order per fold: descending score, lower column first on ties.
    let rankings: Vec<Vec<usize>> = par::map_range(parts.len(), |f| -> Result<Vec<usize>, EvalError> {
        let ranker = match &spec.params {
            ModelParams::RandomForest(_) => fold_spec(spec, f),
            _ => fold_spec(&ClassifierSpec::random_forest(ForestParams::default(), spec.seed), f),
        };
        let train = &parts[f].0;
        let x = data.features.select_columns(&cols[f]).select_rows(train);
        let y: Vec<usize> = train.iter().map(|&r| labels[r]).collect();
        let imp = impurity_importance(&models::fit(&ranker, &x, &y, n_classes)?)?;
        let mut order: Vec<usize> = (0..imp.len()).collect();
        order.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
        Ok(order)
    })
    .into_iter()
    .collect::<Result<_, _>>()?;

    let mut rows = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let kept: Vec<Vec<usize>> = (0..parts.len())
            .map(|f| {
                let mut top = rankings[f][..topk_count(fraction, cols[f].len())].to_vec();
                top.sort_unstable();
                top.iter().map(|&i| cols[f][i]).collect()
            })
            .collect();
        let results: Vec<FoldResult> = par::map_range(parts.len(), |f| {
            evaluate_fold(data, &labels, &kept[f], (&parts[f].0, &parts[f].1), spec, f)
        })
        .into_iter()
        .collect::<Result<_, _>>()?;
        let outcome = assemble(data, results, kept);
        rows.push(row(format!("top {:.0}%", fraction * 100.0), outcome.report));
    }
    Ok(AblationReport {
        study: AblationStudy::TopK,
        rows,
    })
}

/// A named set of feature categories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grouping {
    pub name: String,
    pub categories: Vec<FeatureCategory>,
}

impl Grouping {
    pub fn new(name: &str, categories: &[FeatureCategory]) -> Self {
        Self {
            name: name.to_string(),
            categories: categories.to_vec(),
        }
    }
}

/// The nine fine-grained non-shape categories followed by the four
/// combinations Eye, HeadPose, FaceLandmark and AU.
pub fn default_groupings() -> Vec<Grouping> {
    use FeatureCategory::*;
    let mut out: Vec<Grouping> = [
        Gaze,
        EyeLandmark2D,
        EyeLandmark3D,
        PoseLocation,
        PoseRotation,
        FaceLandmark2D,
        FaceLandmark3D,
        AUIntensity,
        AUPresence,
    ]
    .iter()
    .map(|c| Grouping::new(&c.to_string(), &[*c]))
    .collect();
    out.push(Grouping::new("Eye", &[Gaze, EyeLandmark2D, EyeLandmark3D]));
    out.push(Grouping::new("HeadPose", &[PoseLocation, PoseRotation]));
    out.push(Grouping::new("FaceLandmark", &[FaceLandmark2D, FaceLandmark3D]));
    out.push(Grouping::new("AU", &[AUIntensity, AUPresence]));
    out
}

/// Indices of the features whose source column belongs to the grouping.
/// Names without a recognizable column are never selected.
pub fn grouping_columns(feature_names: &[String], grouping: &Grouping) -> Vec<usize> {
    feature_names
        .iter()
        .enumerate()
        .filter(|(_, name)| {
            let base = split_feature_name(name).map_or(name.as_str(), |(b, _)| b);
            classify_column(base).is_ok_and(|c| grouping.categories.contains(&c))
        })
        .map(|(i, _)| i)
        .collect()
}

/// Cross-validates the classifier on each grouping's columns alone.
pub fn ablation_category(
    data: &LabeledDataset,
    plan: &FoldPlan,
    spec: &ClassifierSpec,
    opts: &CvOptions,
    groupings: &[Grouping],
) -> Result<AblationReport, EvalError> {
    let mut rows = Vec::with_capacity(groupings.len());
    for g in groupings {
        let cols = grouping_columns(&data.feature_names, g);
        if cols.is_empty() {
            return Err(EvalError::EmptyGrouping(g.name.clone()));
        }
        let outcome = run_cv(&data.select_columns(&cols), plan, spec, opts)?;
        rows.push(row(g.name.clone(), outcome.report));
    }
    Ok(AblationReport {
        study: AblationStudy::Category,
        rows,
    })
}

/// The three two-class problems obtained by dropping Neutral, NonAnxious and
/// Anxious in turn. Labels are re-derived from the stored self-reports, and
/// each pairing gets a fresh fold plan over its retained subjects with the
/// plan's `k` and seed.
pub fn ablation_pairwise(
    data: &LabeledDataset,
    plan: &FoldPlan,
    spec: &ClassifierSpec,
    opts: &CvOptions,
    stratified: bool,
) -> Result<AblationReport, EvalError> {
    let mut rows = Vec::with_capacity(3);
    for drop in [Class::Neutral, Class::NonAnxious, Class::Anxious] {
        let scheme = LabelScheme::Pairwise { drop };
        let sub = data.relabel(scheme)?;
        for class in scheme.classes() {
            if !sub.samples.iter().any(|s| s.label == class) {
                return Err(EvalError::ClassAbsent {
                    class,
                    pairing: scheme.to_string(),
                });
            }
        }
        let pair_plan = if stratified {
            grouped_kfold_stratified(&sub.subject_labels(), plan.k, plan.seed)?
        } else {
            grouped_kfold(&sub.subjects(), plan.k, plan.seed)?
        };
        let outcome = run_cv(&sub, &pair_plan, spec, opts)?;
        rows.push(row(scheme.to_string(), outcome.report));
    }
    Ok(AblationReport {
        study: AblationStudy::Pairwise,
        rows,
    })
}
