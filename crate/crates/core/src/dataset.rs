//! Labels, dataset configurations D1–D7 and subject-grouped fold plans.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featurize::{prune_correlated, AggregatedVector, FeaturizeError};
use crate::matrix::Matrix;
use crate::openface::{Education, Gender, HomeLocation, SessionManifest};
use crate::seed;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("self-report {0} is outside the 1-5 Likert range")]
    LikertOutOfRange(u8),
    #[error("mean and std vectors are not aligned at sample {0}")]
    SampleMisalignment(usize),
    #[error("{config} needs the {block} block, which is empty")]
    ConfigUnavailable {
        config: DatasetConfig,
        block: &'static str,
    },
    #[error("need at least {k} subjects for {k}-fold cross-validation, found {found}")]
    TooFewSubjects { k: usize, found: usize },
    #[error("fold count must be positive")]
    InvalidFoldCount,
    #[error("unknown demographic attribute `{0}`")]
    UnknownAttribute(String),
    #[error(transparent)]
    Featurize(#[from] FeaturizeError),
}

/// Self-report class. Declaration order is the canonical class order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    Anxious,
    Neutral,
    NonAnxious,
}

impl Class {
    pub const ALL: [Class; 3] = [Class::Anxious, Class::Neutral, Class::NonAnxious];

    pub fn name(self) -> &'static str {
        match self {
            Class::Anxious => "Anxious",
            Class::Neutral => "Neutral",
            Class::NonAnxious => "NonAnxious",
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelScheme {
    /// 1–3 anxious, 4–5 non-anxious.
    BinaryMain,
    /// 1–2 anxious, 3 neutral, 4–5 non-anxious.
    Multiclass,
    /// Multiclass with one class excluded.
    Pairwise { drop: Class },
}

impl LabelScheme {
    /// Classes this scheme can emit, in canonical order.
    pub fn classes(self) -> Vec<Class> {
        match self {
            LabelScheme::BinaryMain => vec![Class::Anxious, Class::NonAnxious],
            LabelScheme::Multiclass => Class::ALL.to_vec(),
            LabelScheme::Pairwise { drop } => {
                Class::ALL.iter().copied().filter(|&c| c != drop).collect()
            }
        }
    }

    pub fn is_binary(self) -> bool {
        self.classes().len() == 2
    }
}

impl fmt::Display for LabelScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelScheme::BinaryMain => f.write_str("binary_main"),
            LabelScheme::Multiclass => f.write_str("multiclass"),
            LabelScheme::Pairwise { drop } => {
                let kept = self.classes();
                write!(f, "{} vs {} (drop {drop})", kept[0], kept[1])
            }
        }
    }
}

/// Maps a Likert score to a class; `Ok(None)` means the sample is excluded
/// under a pairwise scheme.
pub fn map_label(score: u8, scheme: LabelScheme) -> Result<Option<Class>, DatasetError> {
    let multiclass = match score {
        1 | 2 => Class::Anxious,
        3 => Class::Neutral,
        4 | 5 => Class::NonAnxious,
        _ => return Err(DatasetError::LikertOutOfRange(score)),
    };
    Ok(match scheme {
        LabelScheme::BinaryMain => Some(if score <= 3 {
            Class::Anxious
        } else {
            Class::NonAnxious
        }),
        LabelScheme::Multiclass => Some(multiclass),
        LabelScheme::Pairwise { drop } => (multiclass != drop).then_some(multiclass),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Demographics {
    pub gender: Gender,
    pub education: Education,
    pub home_location: HomeLocation,
}

impl From<&SessionManifest> for Demographics {
    fn from(m: &SessionManifest) -> Self {
        Self {
            gender: m.gender,
            education: m.education,
            home_location: m.home_location,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemographicAttribute {
    Gender,
    Education,
    HomeLocation,
}

impl DemographicAttribute {
    pub fn name(self) -> &'static str {
        match self {
            DemographicAttribute::Gender => "gender",
            DemographicAttribute::Education => "education",
            DemographicAttribute::HomeLocation => "home_location",
        }
    }

    /// All group values, in a fixed order.
    pub fn groups(self) -> &'static [&'static str] {
        match self {
            DemographicAttribute::Gender => &["male", "female"],
            DemographicAttribute::Education => &["undergraduate", "graduate"],
            DemographicAttribute::HomeLocation => &["rural", "urban"],
        }
    }

    pub fn value(self, d: &Demographics) -> &'static str {
        match self {
            DemographicAttribute::Gender => match d.gender {
                Gender::Male => "male",
                Gender::Female => "female",
            },
            DemographicAttribute::Education => match d.education {
                Education::Undergraduate => "undergraduate",
                Education::Graduate => "graduate",
            },
            DemographicAttribute::HomeLocation => match d.home_location {
                HomeLocation::Rural => "rural",
                HomeLocation::Urban => "urban",
            },
        }
    }
}

impl FromStr for DemographicAttribute {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gender" => Ok(Self::Gender),
            "education" => Ok(Self::Education),
            "home_location" => Ok(Self::HomeLocation),
            other => Err(DatasetError::UnknownAttribute(other.to_string())),
        }
    }
}

/// Per-sample bookkeeping; the features live in the row of the dataset matrix
/// with the same index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub subject_id: String,
    pub chunk_index: Option<usize>,
    pub self_report: u8,
    pub label: Class,
    pub demographics: Demographics,
}

/// Design matrix plus labels, subjects and demographics.
///
/// `features` is laid out as the mean block followed by the std block
/// (`n_mean` leading columns); [`DatasetConfig`] selects from it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub scheme: LabelScheme,
    pub features: Matrix,
    pub feature_names: Vec<String>,
    pub n_mean: usize,
    pub samples: Vec<LabeledSample>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn classes(&self) -> Vec<Class> {
        self.scheme.classes()
    }

    /// Labels as indices into [`Self::classes`].
    pub fn label_indices(&self) -> Vec<usize> {
        let classes = self.classes();
        self.samples
            .iter()
            .map(|s| {
                classes
                    .iter()
                    .position(|&c| c == s.label)
                    .expect("label valid for scheme")
            })
            .collect()
    }

    /// Distinct subject ids, sorted.
    pub fn subjects(&self) -> Vec<String> {
        self.samples
            .iter()
            .map(|s| s.subject_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// One label per subject (the label of its first sample).
    pub fn subject_labels(&self) -> Vec<(String, Class)> {
        let mut seen = BTreeMap::new();
        for s in &self.samples {
            seen.entry(s.subject_id.clone()).or_insert(s.label);
        }
        seen.into_iter().collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> LabeledDataset {
        LabeledDataset {
            scheme: self.scheme,
            features: self.features.select_rows(rows),
            feature_names: self.feature_names.clone(),
            n_mean: self.n_mean,
            samples: rows.iter().map(|&r| self.samples[r].clone()).collect(),
        }
    }

    /// Keeps the given full-layout columns (must be sorted ascending so the
    /// mean block stays in front).
    pub fn select_columns(&self, cols: &[usize]) -> LabeledDataset {
        debug_assert!(cols.windows(2).all(|w| w[0] < w[1]));
        LabeledDataset {
            scheme: self.scheme,
            features: self.features.select_columns(cols),
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            n_mean: cols.iter().filter(|&&c| c < self.n_mean).count(),
            samples: self.samples.clone(),
        }
    }

    /// Re-derives labels from the stored Likert scores under `scheme`,
    /// dropping excluded samples. Features are untouched.
    pub fn relabel(&self, scheme: LabelScheme) -> Result<LabeledDataset, DatasetError> {
        let mut rows = Vec::new();
        let mut samples = Vec::new();
        for (i, s) in self.samples.iter().enumerate() {
            if let Some(label) = map_label(s.self_report, scheme)? {
                rows.push(i);
                samples.push(LabeledSample {
                    label,
                    ..s.clone()
                });
            }
        }
        Ok(LabeledDataset {
            scheme,
            features: self.features.select_rows(&rows),
            feature_names: self.feature_names.clone(),
            n_mean: self.n_mean,
            samples,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DatasetConfig {
    /// All `__mean` columns.
    D1,
    /// Correlation-pruned means.
    D2,
    /// All `__std` columns.
    D3,
    /// Correlation-pruned stds.
    D4,
    /// Means then stds.
    D5,
    /// Pruned means then pruned stds (prune, then concatenate).
    D6,
    /// Pruned concatenation (concatenate, then prune).
    D7,
}

impl DatasetConfig {
    pub const ALL: [DatasetConfig; 7] = [
        DatasetConfig::D1,
        DatasetConfig::D2,
        DatasetConfig::D3,
        DatasetConfig::D4,
        DatasetConfig::D5,
        DatasetConfig::D6,
        DatasetConfig::D7,
    ];

    pub fn needs_mean(self) -> bool {
        !matches!(self, DatasetConfig::D3 | DatasetConfig::D4)
    }

    pub fn needs_std(self) -> bool {
        !matches!(self, DatasetConfig::D1 | DatasetConfig::D2)
    }

    pub fn uses_pruning(self) -> bool {
        matches!(
            self,
            DatasetConfig::D2 | DatasetConfig::D4 | DatasetConfig::D6 | DatasetConfig::D7
        )
    }

    pub fn description(self) -> &'static str {
        match self {
            DatasetConfig::D1 => "mean of each feature",
            DatasetConfig::D2 => "reduced mean",
            DatasetConfig::D3 => "std of each feature",
            DatasetConfig::D4 => "reduced std",
            DatasetConfig::D5 => "mean and std of each feature",
            DatasetConfig::D6 => "reduced mean + reduced std",
            DatasetConfig::D7 => "reduced (mean + std)",
        }
    }
}

impl fmt::Display for DatasetConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

fn prune_block(
    full: &Matrix,
    names: &[String],
    cols: &[usize],
    fit_rows: &[usize],
    threshold: f64,
) -> Result<Vec<usize>, DatasetError> {
    let sub = full.select_rows(fit_rows).select_columns(cols);
    let sub_names: Vec<String> = cols.iter().map(|&c| names[c].clone()).collect();
    let pruned = prune_correlated(&sub, &sub_names, threshold)?;
    Ok(pruned.kept_indices.iter().map(|&k| cols[k]).collect())
}

/// Resolves a configuration to column indices of the full layout, fitting any
/// correlation pruning on `fit_rows` only.
pub fn config_columns(
    full: &Matrix,
    feature_names: &[String],
    n_mean: usize,
    config: DatasetConfig,
    threshold: f64,
    fit_rows: &[usize],
) -> Result<Vec<usize>, DatasetError> {
    let means: Vec<usize> = (0..n_mean).collect();
    let stds: Vec<usize> = (n_mean..full.cols()).collect();
    if config.needs_mean() && means.is_empty() {
        return Err(DatasetError::ConfigUnavailable {
            config,
            block: "mean",
        });
    }
    if config.needs_std() && stds.is_empty() {
        return Err(DatasetError::ConfigUnavailable { config, block: "std" });
    }
    let prune = |cols: &[usize]| prune_block(full, feature_names, cols, fit_rows, threshold);
    Ok(match config {
        DatasetConfig::D1 => means,
        DatasetConfig::D2 => prune(&means)?,
        DatasetConfig::D3 => stds,
        DatasetConfig::D4 => prune(&stds)?,
        DatasetConfig::D5 => (0..full.cols()).collect(),
        DatasetConfig::D6 => {
            let mut cols = prune(&means)?;
            cols.extend(prune(&stds)?);
            cols
        }
        DatasetConfig::D7 => prune(&(0..full.cols()).collect::<Vec<_>>())?,
    })
}

/// Assembles the design matrix for `config` from aligned mean and std vectors,
/// pruning over all samples.
pub fn build_config(
    mean_vectors: &[AggregatedVector],
    std_vectors: &[AggregatedVector],
    config: DatasetConfig,
    threshold: f64,
) -> Result<(Matrix, Vec<String>), DatasetError> {
    let (full, names, n_mean) = stack_blocks(mean_vectors, std_vectors)?;
    let rows: Vec<usize> = (0..full.rows()).collect();
    let cols = config_columns(&full, &names, n_mean, config, threshold, &rows)?;
    let picked = cols.iter().map(|&c| names[c].clone()).collect();
    Ok((full.select_columns(&cols), picked))
}

/// Stacks aligned mean and std vectors into the full `[means | stds]` layout.
/// Either side may be empty (no samples), in which case that block has no
/// columns.
pub fn stack_blocks(
    mean_vectors: &[AggregatedVector],
    std_vectors: &[AggregatedVector],
) -> Result<(Matrix, Vec<String>, usize), DatasetError> {
    let n = mean_vectors.len().max(std_vectors.len());
    if !mean_vectors.is_empty() && !std_vectors.is_empty() {
        if mean_vectors.len() != std_vectors.len() {
            return Err(DatasetError::SampleMisalignment(
                mean_vectors.len().min(std_vectors.len()),
            ));
        }
        for (i, (m, s)) in mean_vectors.iter().zip(std_vectors).enumerate() {
            if m.subject_id != s.subject_id || m.chunk_index != s.chunk_index {
                return Err(DatasetError::SampleMisalignment(i));
            }
        }
    }
    let (mean_m, mut names) = crate::featurize::stack_vectors(mean_vectors)?;
    let (std_m, std_names) = crate::featurize::stack_vectors(std_vectors)?;
    let n_mean = names.len();
    names.extend(std_names);
    let mean_m = if mean_vectors.is_empty() { Matrix::zeros(n, 0) } else { mean_m };
    let std_m = if std_vectors.is_empty() { Matrix::zeros(n, 0) } else { std_m };
    Ok((mean_m.hstack(&std_m), names, n_mean))
}

/// Subject → fold assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, subject_id: &str) -> Option<usize> {
        self.assignment.get(subject_id).copied()
    }

    pub fn test_subjects(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(s, _)| s.as_str())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

fn check_k(k: usize, found: usize) -> Result<(), DatasetError> {
    if k == 0 {
        return Err(DatasetError::InvalidFoldCount);
    }
    if found < k {
        return Err(DatasetError::TooFewSubjects { k, found });
    }
    Ok(())
}

/// Seeded shuffle of the (sorted, de-duplicated) subjects, dealt round-robin
/// into `k` folds.
pub fn grouped_kfold<S: AsRef<str>>(
    subject_ids: &[S],
    k: usize,
    seed: u64,
) -> Result<FoldPlan, DatasetError> {
    let mut subjects: Vec<String> = subject_ids
        .iter()
        .map(|s| s.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    check_k(k, subjects.len())?;
    subjects.shuffle(&mut seed::rng(seed));
    let assignment = subjects
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s, i % k))
        .collect();
    Ok(FoldPlan { k, seed, assignment })
}

/// Like [`grouped_kfold`], but deals each label's subjects separately (in
/// class order) with one running counter, so folds stay within one subject
/// of each other in size while spreading every label across folds.
pub fn grouped_kfold_stratified(
    subjects: &[(String, Class)],
    k: usize,
    seed: u64,
) -> Result<FoldPlan, DatasetError> {
    let mut by_class: BTreeMap<Class, BTreeSet<String>> = BTreeMap::new();
    for (s, c) in subjects {
        by_class.entry(*c).or_default().insert(s.clone());
    }
    let total: usize = by_class.values().map(BTreeSet::len).sum();
    check_k(k, total)?;
    let mut rng = seed::rng(seed);
    let mut assignment = BTreeMap::new();
    let mut next = 0usize;
    for (_, group) in by_class {
        let mut group: Vec<String> = group.into_iter().collect();
        group.shuffle(&mut rng);
        for s in group {
            assignment.insert(s, next % k);
            next += 1;
        }
    }
    Ok(FoldPlan { k, seed, assignment })
}

/// Per-class counts, optionally split by a demographic attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub group_by: Option<DemographicAttribute>,
    /// group value (or `"all"`) → class → count; every class is present.
    pub counts: BTreeMap<String, BTreeMap<Class, usize>>,
}

impl ClassDistribution {
    pub fn total(&self, class: Class) -> usize {
        self.counts.values().map(|m| m[&class]).sum()
    }
}

pub fn class_distribution(
    samples: &[LabeledSample],
    group_by: Option<DemographicAttribute>,
) -> ClassDistribution {
    let zero = || Class::ALL.iter().map(|&c| (c, 0usize)).collect::<BTreeMap<_, _>>();
    let mut counts: BTreeMap<String, BTreeMap<Class, usize>> = match group_by {
        None => [("all".to_string(), zero())].into(),
        Some(attr) => attr.groups().iter().map(|g| (g.to_string(), zero())).collect(),
    };
    for s in samples {
        let key = group_by.map_or("all", |a| a.value(&s.demographics));
        *counts
            .get_mut(key)
            .expect("group present")
            .get_mut(&s.label)
            .expect("class present") += 1;
    }
    ClassDistribution { group_by, counts }
}
