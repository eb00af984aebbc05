//! Classical classifiers behind one train / predict / probability interface.
//!
//! Labels are class indices `0..n_classes`; index order is the class order
//! used for every tie-break (`predict` is the first maximum of
//! `predict_proba`).

mod adaboost;
mod forest;
mod importance;
mod knn;
pub mod logreg;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

pub use adaboost::{AdaBoostModel, Stump};
pub use forest::Forest;
pub use importance::{impurity_importance, permutation_importance, PermutationImportance, ScoreMetric};
pub use knn::KnnModel;
pub use logreg::LogRegModel;
pub use tree::{gini, DecisionTree, TreeNode};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("k_neighbors = {k} exceeds the {n} training samples")]
    KTooLarge { k: usize, n: usize },
    #[error("loss became non-finite at iteration {0}; lower the learning rate")]
    NonFiniteLoss(usize),
    #[error("{0} does not support impurity importance")]
    UnsupportedModel(&'static str),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("label {label} out of range for {n_classes} classes")]
    InvalidLabel { label: usize, n_classes: usize },
    #[error("model document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features considered per split; `None` means all.
    pub mtry: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 1,
            mtry: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// `None` means `round(sqrt(d))`.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            mtry: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnParams {
    pub k_neighbors: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k_neighbors: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegParams {
    pub l2: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            l2: 1.0,
            learning_rate: 0.1,
            max_iters: 1000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaBoostParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
}

impl Default for AdaBoostParams {
    fn default() -> Self {
        Self {
            n_estimators: 50,
            learning_rate: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    Knn(KnnParams),
    LogisticRegression(LogRegParams),
    AdaBoost(AdaBoostParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    #[serde(flatten)]
    pub params: ModelParams,
    #[serde(default)]
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(params: ModelParams, seed: u64) -> Self {
        Self { params, seed }
    }

    pub fn decision_tree(params: TreeParams) -> Self {
        Self::new(ModelParams::DecisionTree(params), 0)
    }

    pub fn random_forest(params: ForestParams, seed: u64) -> Self {
        Self::new(ModelParams::RandomForest(params), seed)
    }

    pub fn knn(k_neighbors: usize) -> Self {
        Self::new(ModelParams::Knn(KnnParams { k_neighbors }), 0)
    }

    pub fn logistic_regression(params: LogRegParams) -> Self {
        Self::new(ModelParams::LogisticRegression(params), 0)
    }

    pub fn adaboost(params: AdaBoostParams) -> Self {
        Self::new(ModelParams::AdaBoost(params), 0)
    }

    /// The five default-configured classifiers.
    pub fn defaults(seed: u64) -> Vec<ClassifierSpec> {
        vec![
            Self::new(ModelParams::DecisionTree(TreeParams::default()), seed),
            Self::new(ModelParams::RandomForest(ForestParams::default()), seed),
            Self::new(ModelParams::Knn(KnnParams::default()), seed),
            Self::new(ModelParams::LogisticRegression(LogRegParams::default()), seed),
            Self::new(ModelParams::AdaBoost(AdaBoostParams::default()), seed),
        ]
    }

    pub fn kind_name(&self) -> &'static str {
        match self.params {
            ModelParams::DecisionTree(_) => "DecisionTree",
            ModelParams::RandomForest(_) => "RandomForest",
            ModelParams::Knn(_) => "KNN",
            ModelParams::LogisticRegression(_) => "LogisticRegression",
            ModelParams::AdaBoost(_) => "AdaBoost",
        }
    }

    pub fn is_tree_based(&self) -> bool {
        matches!(
            self.params,
            ModelParams::DecisionTree(_) | ModelParams::RandomForest(_)
        )
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidHyperparameter(m.to_string()));
        match &self.params {
            ModelParams::DecisionTree(p) => {
                if p.min_samples_leaf == 0 {
                    return bad("min_samples_leaf must be >= 1");
                }
                if p.mtry == Some(0) {
                    return bad("mtry must be >= 1");
                }
            }
            ModelParams::RandomForest(p) => {
                if p.n_trees == 0 {
                    return bad("n_trees must be >= 1");
                }
                if p.min_samples_leaf == 0 {
                    return bad("min_samples_leaf must be >= 1");
                }
                if p.mtry == Some(0) {
                    return bad("mtry must be >= 1");
                }
            }
            ModelParams::Knn(p) => {
                if p.k_neighbors == 0 {
                    return bad("k_neighbors must be >= 1");
                }
            }
            ModelParams::LogisticRegression(p) => {
                if !(p.l2 >= 0.0 && p.l2.is_finite()) {
                    return bad("l2 must be >= 0");
                }
                if !(p.learning_rate > 0.0 && p.learning_rate.is_finite()) {
                    return bad("learning_rate must be > 0");
                }
                if p.tol.is_nan() || p.tol < 0.0 {
                    return bad("tol must be >= 0");
                }
            }
            ModelParams::AdaBoost(p) => {
                if p.n_estimators == 0 {
                    return bad("n_estimators must be >= 1");
                }
                if !(p.learning_rate > 0.0 && p.learning_rate.is_finite()) {
                    return bad("learning_rate must be > 0");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state", rename_all = "snake_case")]
pub enum ModelState {
    DecisionTree(DecisionTree),
    RandomForest(Forest),
    Knn(KnnModel),
    LogisticRegression(LogRegModel),
    AdaBoost(AdaBoostModel),
}

/// A fitted classifier. Immutable after [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ClassifierSpec,
    pub n_classes: usize,
    pub feature_count: usize,
    pub state: ModelState,
}

fn check_training(x: &Matrix, y: &[usize], n_classes: usize) -> Result<(), ModelError> {
    if x.rows() == 0 || y.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if x.rows() != y.len() {
        return Err(ModelError::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    if let Some(&label) = y.iter().find(|&&l| l >= n_classes) {
        return Err(ModelError::InvalidLabel { label, n_classes });
    }
    Ok(())
}

/// Trains the classifier described by `spec` on `x` / `y`.
pub fn fit(
    spec: &ClassifierSpec,
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
) -> Result<TrainedModel, ModelError> {
    spec.validate()?;
    check_training(x, y, n_classes)?;
    let state = match &spec.params {
        ModelParams::DecisionTree(p) => {
            let mut rng = crate::seed::rng(spec.seed);
            let rows: Vec<usize> = (0..x.rows()).collect();
            ModelState::DecisionTree(DecisionTree::fit(x, y, n_classes, &rows, p, &mut rng))
        }
        ModelParams::RandomForest(p) => {
            ModelState::RandomForest(Forest::fit(x, y, n_classes, p, spec.seed))
        }
        ModelParams::Knn(p) => ModelState::Knn(KnnModel::fit(x, y, n_classes, p.k_neighbors)?),
        ModelParams::LogisticRegression(p) => {
            ModelState::LogisticRegression(LogRegModel::fit(x, y, n_classes, p)?)
        }
        ModelParams::AdaBoost(p) => ModelState::AdaBoost(AdaBoostModel::fit(x, y, n_classes, p)),
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        n_classes,
        feature_count: x.cols(),
        state,
    })
}

/// Index of the first maximum.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate().skip(1) {
        if p > v[best] {
            best = i;
        }
    }
    best
}

impl TrainedModel {
    fn check_probe(&self, x: &Matrix) -> Result<(), ModelError> {
        if x.cols() != self.feature_count {
            return Err(ModelError::DimensionMismatch {
                expected: self.feature_count,
                found: x.cols(),
            });
        }
        Ok(())
    }

    /// Class probabilities for one row (length `n_classes`, summing to 1).
    pub fn proba_row(&self, row: &[f64]) -> Vec<f64> {
        match &self.state {
            ModelState::DecisionTree(t) => t.proba(row),
            ModelState::RandomForest(f) => f.proba(row),
            ModelState::Knn(k) => k.proba(row),
            ModelState::LogisticRegression(m) => m.proba(row),
            ModelState::AdaBoost(m) => m.proba(row),
        }
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<Vec<f64>>, ModelError> {
        self.check_probe(x)?;
        Ok((0..x.rows()).map(|r| self.proba_row(x.row(r))).collect())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>, ModelError> {
        Ok(self.predict_proba(x)?.iter().map(|p| argmax(p)).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelDocument {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model: self.clone(),
        })
        .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<TrainedModel, ModelError> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| ModelError::Document(e.to_string()))?;
        if doc.format != MODEL_FORMAT {
            return Err(ModelError::Document(format!("unexpected format `{}`", doc.format)));
        }
        if doc.version != MODEL_VERSION {
            return Err(ModelError::Document(format!(
                "unsupported version {} (expected {MODEL_VERSION})",
                doc.version
            )));
        }
        Ok(doc.model)
    }
}

const MODEL_FORMAT: &str = "facecue-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    model: TrainedModel,
}
