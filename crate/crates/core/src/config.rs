//! Experiment configuration file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetConfig, DemographicAttribute, LabelScheme};
use crate::eval::{CvOptions, Grouping, PruneScope};
use crate::featurize::{Stat, StdDivisor};
use crate::models::{ClassifierSpec, ForestParams, ScoreMetric};

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "FACECUE_SEED";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    /// Dotted path of the offending field, e.g. `classifier.n_trees`.
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ConfigIssue>),
    #[error("{SEED_ENV} must be an unsigned 64-bit integer, got `{0}`")]
    BadSeedOverride(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// One sample per recording (mean/std over all frames).
    #[default]
    Recording,
    /// One sample per fixed window (window means).
    Chunk,
}

/// A single value or a list, so a config can ask for several dataset
/// configurations or classifiers at once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportanceSettings {
    pub n_repeats: usize,
    pub metric: ScoreMetric,
}

impl Default for ImportanceSettings {
    fn default() -> Self {
        Self {
            n_repeats: 5,
            metric: ScoreMetric::Accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSettings {
    pub fractions: Vec<f64>,
    /// `None` uses the thirteen default groupings.
    pub groupings: Option<Vec<Grouping>>,
}

impl Default for AblationSettings {
    fn default() -> Self {
        Self {
            fractions: crate::eval::default_fractions(),
            groupings: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Relative paths resolve against the config file's directory.
    pub manifest_path: PathBuf,
    /// Report directory; the CLI `--out` flag takes precedence.
    pub output_dir: Option<PathBuf>,
    pub lenient_manifest: bool,
    pub trim_s: f64,
    pub granularity: Granularity,
    pub window_s: f64,
    pub stats: Vec<Stat>,
    pub std_divisor: StdDivisor,
    /// Drop rigid and non-rigid shape parameters. `None` drops them for
    /// chunk granularity only.
    pub exclude_shape: Option<bool>,
    pub label_scheme: LabelScheme,
    pub dataset_config: OneOrMany<DatasetConfig>,
    pub correlation_threshold: f64,
    pub classifier: OneOrMany<ClassifierSpec>,
    pub k: usize,
    pub seed: u64,
    pub prune_scope: PruneScope,
    pub stratify_subjects_by_label: bool,
    pub slice_attributes: Vec<DemographicAttribute>,
    pub importance: ImportanceSettings,
    pub ablation: AblationSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            manifest_path: PathBuf::from("manifest.json"),
            output_dir: None,
            lenient_manifest: false,
            trim_s: 90.0,
            granularity: Granularity::Recording,
            window_s: 10.0,
            stats: vec![Stat::Mean, Stat::Std],
            std_divisor: StdDivisor::Sample,
            exclude_shape: None,
            label_scheme: LabelScheme::BinaryMain,
            dataset_config: OneOrMany::One(DatasetConfig::D5),
            correlation_threshold: 0.75,
            classifier: OneOrMany::One(ClassifierSpec::random_forest(ForestParams::default(), 0)),
            k: 5,
            seed: 42,
            prune_scope: PruneScope::PerFold,
            stratify_subjects_by_label: false,
            slice_attributes: vec![
                DemographicAttribute::Gender,
                DemographicAttribute::Education,
                DemographicAttribute::HomeLocation,
            ],
            importance: ImportanceSettings::default(),
            ablation: AblationSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads a config file and resolves `manifest_path` (and `output_dir`)
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(dir);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if self.manifest_path.is_relative() {
            self.manifest_path = base.join(&self.manifest_path);
        }
        if let Some(out) = &self.output_dir {
            if out.is_relative() {
                self.output_dir = Some(base.join(out));
            }
        }
    }

    /// Applies `FACECUE_SEED` when set. Returns whether it was applied.
    pub fn apply_seed_env(&mut self) -> Result<bool, ConfigError> {
        match std::env::var(SEED_ENV) {
            Ok(v) => {
                self.seed = v.trim().parse().map_err(|_| ConfigError::BadSeedOverride(v.clone()))?;
                Ok(true)
            }
            Err(_) => Ok(false),
        }
    }

    pub fn dataset_configs(&self) -> Vec<DatasetConfig> {
        self.dataset_config.to_vec()
    }

    pub fn classifiers(&self) -> Vec<ClassifierSpec> {
        self.classifier.to_vec()
    }

    pub fn exclude_shape(&self) -> bool {
        self.exclude_shape.unwrap_or(self.granularity == Granularity::Chunk)
    }

    pub fn cv_options(&self, config: DatasetConfig) -> CvOptions {
        CvOptions {
            config,
            threshold: self.correlation_threshold,
            prune_scope: self.prune_scope,
        }
    }

    /// Every problem found, each tagged with its field path. `check_paths`
    /// also requires the manifest to exist.
    pub fn issues(&self, check_paths: bool) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let mut issue = |field: &str, message: &str| {
            out.push(ConfigIssue {
                field: field.to_string(),
                message: message.to_string(),
            })
        };
        if check_paths && !self.manifest_path.is_file() {
            issue("manifest_path", &format!("{} does not exist", self.manifest_path.display()));
        }
        if !(self.trim_s.is_finite() && self.trim_s > 0.0) {
            issue("trim_s", "must be positive");
        }
        if !(self.window_s.is_finite() && self.window_s > 0.0) {
            issue("window_s", "must be positive");
        }
        if self.stats.is_empty() {
            issue("stats", "must name at least one of mean, std");
        }
        if !(self.correlation_threshold > 0.0 && self.correlation_threshold <= 1.0) {
            issue("correlation_threshold", "must lie in (0, 1]");
        }
        if self.k < 2 {
            issue("k", "must be at least 2");
        }
        let configs = self.dataset_configs();
        if configs.is_empty() {
            issue("dataset_config", "must name at least one configuration");
        }
        for c in &configs {
            let chunk = self.granularity == Granularity::Chunk;
            if c.needs_std() && (chunk || !self.stats.contains(&Stat::Std)) {
                issue(
                    "dataset_config",
                    &format!("{c} needs std features, unavailable with this granularity/stats"),
                );
            }
            if c.needs_mean() && !self.stats.contains(&Stat::Mean) {
                issue("dataset_config", &format!("{c} needs mean features but stats omits mean"));
            }
        }
        let classifiers = self.classifiers();
        if classifiers.is_empty() {
            issue("classifier", "must name at least one classifier");
        }
        for (i, spec) in classifiers.iter().enumerate() {
            if let Err(e) = spec.validate() {
                let field = match &self.classifier {
                    OneOrMany::One(_) => "classifier".to_string(),
                    OneOrMany::Many(_) => format!("classifier[{i}]"),
                };
                issue(&field, &e.to_string());
            }
        }
        if self.importance.n_repeats == 0 {
            issue("importance.n_repeats", "must be at least 1");
        }
        if self.ablation.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            issue("ablation.fractions", "every fraction must lie in (0, 1]");
        }
        if let Some(gs) = &self.ablation.groupings {
            for (i, g) in gs.iter().enumerate() {
                if g.categories.is_empty() {
                    issue(&format!("ablation.groupings[{i}].categories"), "must not be empty");
                }
            }
        }
        out
    }

    pub fn validate(&self, check_paths: bool) -> Result<(), ConfigError> {
        let issues = self.issues(check_paths);
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(issues))
        }
    }
}
