//! Subject-independent cross-validation, metrics, ablation studies and
//! demographic slicing.

mod ablation;
mod cv;
mod metrics;
mod slice;

use thiserror::Error;

use crate::dataset::{Class, DatasetError};
use crate::models::ModelError;

pub use ablation::{
    ablation_category, ablation_pairwise, ablation_topk, default_fractions, default_groupings, grouping_columns,
    topk_count, AblationReport, AblationRow, AblationStudy, Grouping,
};
pub use cv::{
    fold_columns, pooled_metrics, run_cv, CvOptions, CvOutcome, FoldMetrics, MetricsReport, PooledMetrics,
    Prediction, PruneScope, AveragedMetrics,
};
pub use metrics::{auc, auc_from_proba, confusion, metrics_from_confusion, ClassMetrics, ConfusionMatrix};
pub use slice::{slice_report, GroupSlice, SliceReport};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("label `{0}` is not in the class list")]
    UnknownLabel(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("AUC needs both positive and negative samples")]
    SingleClass,
    #[error("subject `{0}` has no fold in the fold plan")]
    FoldCoverage(String),
    #[error("grouping `{0}` selects no columns")]
    EmptyGrouping(String),
    #[error("class {class} has no samples in pairing {pairing}")]
    ClassAbsent { class: Class, pairing: String },
    #[error("{0} is not tree-based; top-k ablation ranks features by impurity importance")]
    NotTreeBased(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}
