//! End-to-end experiment driver: manifest → trimmed recordings → feature
//! vectors → labeled dataset → cross-validation and reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Granularity};
use crate::dataset::{
    class_distribution, grouped_kfold, grouped_kfold_stratified, map_label, ClassDistribution, DatasetConfig,
    Demographics, FoldPlan, LabelScheme, LabeledDataset, LabeledSample,
};
use crate::eval::{
    ablation_category, ablation_pairwise, ablation_topk, default_groupings, run_cv, slice_report, AblationReport, AblationStudy,
    MetricsReport, SliceReport,
};
use crate::featurize::{aggregate_full, chunk_and_flatten, split_feature_name, Stat, StdDivisor};
use crate::matrix::Matrix;
use crate::models::{self, impurity_importance, permutation_importance, ClassifierSpec, ScoreMetric};
use crate::openface::{
    classify_column, load_manifest_with, read_openface_file, trim_to_duration, FrameTable, IngestError, ManifestMode,
    SessionManifest,
};
use crate::synth::{map_subjects, CohortSpec};
use crate::{par, report, seed, Error, Result};

/// Seed stream for classifier seeds under the experiment seed.
const MODEL_STREAM: u64 = 1;
/// Seed stream for permutation-importance shuffles.
const PERMUTATION_STREAM: u64 = 2;

/// How recordings become feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureOptions {
    pub trim_s: f64,
    pub granularity: Granularity,
    pub window_s: f64,
    pub stats: Vec<Stat>,
    pub std_divisor: StdDivisor,
    pub exclude_shape: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self::from(&ExperimentConfig::default())
    }
}

impl From<&ExperimentConfig> for FeatureOptions {
    fn from(c: &ExperimentConfig) -> Self {
        Self {
            trim_s: c.trim_s,
            granularity: c.granularity,
            window_s: c.window_s,
            stats: c.stats.clone(),
            std_divisor: c.std_divisor,
            exclude_shape: c.exclude_shape(),
        }
    }
}

/// Data-quality statistics of one included recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingQuality {
    pub subject_id: String,
    pub fps: f64,
    pub raw_frames: usize,
    pub used_frames: usize,
    pub failed_frame_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub subject_id: String,
    pub reason: String,
}

/// Samples of one recording: full-layout vectors (means then stds).
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectFeatures {
    pub manifest: SessionManifest,
    pub feature_names: Vec<String>,
    pub n_mean: usize,
    /// `(chunk_index, values)` per sample.
    pub samples: Vec<(Option<usize>, Vec<f64>)>,
    pub quality: RecordingQuality,
}

pub enum SubjectOutcome {
    Included(SubjectFeatures),
    Excluded(Exclusion),
}

fn is_shape_feature(name: &str) -> bool {
    let base = split_feature_name(name).map_or(name, |(b, _)| b);
    classify_column(base).is_ok_and(|c| c.is_shape())
}

/// Trims and aggregates one recording. Recordings shorter than the trim
/// target are excluded rather than failing the run.
pub fn featurize_recording(manifest: &SessionManifest, table: &FrameTable, opts: &FeatureOptions) -> Result<SubjectOutcome> {
    let trimmed = match trim_to_duration(table, opts.trim_s) {
        Ok(t) => t,
        Err(e @ IngestError::TooShort { .. }) => {
            return Ok(SubjectOutcome::Excluded(Exclusion {
                subject_id: manifest.subject_id.clone(),
                reason: e.to_string(),
            }))
        }
        Err(e) => return Err(e.into()),
    };
    let (names, n_mean, samples) = match opts.granularity {
        Granularity::Recording => {
            let v = aggregate_full(&trimmed, &opts.stats, opts.std_divisor)?;
            let n_mean = v.feature_names.iter().filter(|n| n.ends_with(Stat::Mean.suffix())).count();
            (v.feature_names, n_mean, vec![(None, v.values)])
        }
        Granularity::Chunk => {
            let set = chunk_and_flatten(&trimmed, opts.window_s)?;
            let names = set.vectors.first().map(|v| v.feature_names.clone()).unwrap_or_default();
            let n = names.len();
            (names, n, set.vectors.into_iter().map(|v| (v.chunk_index, v.values)).collect())
        }
    };
    let keep: Vec<usize> = (0..names.len())
        .filter(|&i| !(opts.exclude_shape && is_shape_feature(&names[i])))
        .collect();
    let n_mean = keep.iter().filter(|&&i| i < n_mean).count();
    let feature_names = keep.iter().map(|&i| names[i].clone()).collect();
    let samples = samples
        .into_iter()
        .map(|(c, v)| (c, keep.iter().map(|&i| v[i]).collect()))
        .collect();
    Ok(SubjectOutcome::Included(SubjectFeatures {
        manifest: manifest.clone(),
        feature_names,
        n_mean,
        samples,
        quality: RecordingQuality {
            subject_id: manifest.subject_id.clone(),
            fps: table.fps(),
            raw_frames: table.n_frames(),
            used_frames: trimmed.n_frames(),
            failed_frame_fraction: trimmed.failed_frame_fraction(),
        },
    }))
}

/// A labeled dataset plus the bookkeeping of how it was built.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dataset: LabeledDataset,
    pub quality: Vec<RecordingQuality>,
    pub excluded: Vec<Exclusion>,
    pub warnings: Vec<String>,
}

/// Labels and stacks subject features. Subjects excluded by the scheme
/// (pairwise drop) are left out silently.
pub fn assemble_dataset(outcomes: Vec<SubjectOutcome>, scheme: LabelScheme) -> Result<PreparedData> {
    let mut rows: Vec<f64> = Vec::new();
    let mut samples = Vec::new();
    let mut layout: Option<(Vec<String>, usize)> = None;
    let mut quality = Vec::new();
    let mut excluded = Vec::new();
    for outcome in outcomes {
        let s = match outcome {
            SubjectOutcome::Included(s) => s,
            SubjectOutcome::Excluded(e) => {
                excluded.push(e);
                continue;
            }
        };
        match &layout {
            None => layout = Some((s.feature_names.clone(), s.n_mean)),
            Some((names, n_mean)) => {
                if *names != s.feature_names || *n_mean != s.n_mean {
                    return Err(Error::SchemaMismatch(s.manifest.subject_id.clone()));
                }
            }
        }
        quality.push(s.quality.clone());
        let Some(label) = map_label(s.manifest.self_report, scheme)? else { continue };
        for (chunk_index, values) in s.samples {
            rows.extend(values);
            samples.push(LabeledSample {
                subject_id: s.manifest.subject_id.clone(),
                chunk_index,
                self_report: s.manifest.self_report,
                label,
                demographics: Demographics::from(&s.manifest),
            });
        }
    }
    let Some((feature_names, n_mean)) = layout else {
        return Err(Error::NoData("every recording was excluded".into()));
    };
    if samples.is_empty() {
        return Err(Error::NoData("no samples remain under the label scheme".into()));
    }
    let features = Matrix::from_vec(samples.len(), feature_names.len(), rows);
    Ok(PreparedData {
        dataset: LabeledDataset {
            scheme,
            features,
            feature_names,
            n_mean,
            samples,
        },
        quality,
        excluded,
        warnings: Vec::new(),
    })
}

/// Reads every recording named by the config's manifest and builds the
/// labeled dataset.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let mode = if cfg.lenient_manifest {
        ManifestMode::Lenient
    } else {
        ManifestMode::Strict
    };
    let loaded = load_manifest_with(&cfg.manifest_path, mode)?;
    let dir = cfg.manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let opts = FeatureOptions::from(cfg);
    let outcomes: Vec<SubjectOutcome> = par::map_range(loaded.sessions.len(), |i| -> Result<SubjectOutcome> {
        let m = &loaded.sessions[i];
        let table = read_openface_file(&m.resolve_path(&dir), &m.subject_id, m.fps)?;
        featurize_recording(m, &table, &opts)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut data = assemble_dataset(outcomes, cfg.label_scheme)?;
    data.warnings = loaded.warnings;
    Ok(data)
}

/// Builds a dataset straight from a synthetic cohort without writing files.
pub fn dataset_from_synth(spec: &CohortSpec, opts: &FeatureOptions, scheme: LabelScheme) -> Result<PreparedData> {
    let outcomes: Vec<SubjectOutcome> = map_subjects(spec, |s| featurize_recording(&s.manifest, &s.table, opts))?
        .into_iter()
        .collect::<Result<_>>()?;
    assemble_dataset(outcomes, scheme)
}

pub fn fold_plan(data: &LabeledDataset, k: usize, seed: u64, stratified: bool) -> Result<FoldPlan> {
    Ok(if stratified {
        grouped_kfold_stratified(&data.subject_labels(), k, seed)?
    } else {
        grouped_kfold(&data.subjects(), k, seed)?
    })
}

/// The classifier specs of a config with seeds derived from the experiment
/// seed.
pub fn seeded_classifiers(cfg: &ExperimentConfig) -> Vec<ClassifierSpec> {
    let s = seed::derive(cfg.seed, MODEL_STREAM);
    cfg.classifiers()
        .into_iter()
        .map(|spec| ClassifierSpec { seed: s, ..spec })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub dataset_config: DatasetConfig,
    pub description: String,
    pub classifier: String,
    pub spec: ClassifierSpec,
    pub report: MetricsReport,
    pub slices: Vec<SliceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label_scheme: LabelScheme,
    pub granularity: Granularity,
    pub n_subjects: usize,
    pub n_samples: usize,
    pub k: usize,
    pub class_distribution: ClassDistribution,
    pub rows: Vec<RunRow>,
    pub excluded: Vec<Exclusion>,
    pub quality: Vec<RecordingQuality>,
}

/// Cross-validates every (dataset configuration, classifier) pair.
pub fn run(cfg: &ExperimentConfig, data: &PreparedData) -> Result<RunReport> {
    let ds = &data.dataset;
    let plan = fold_plan(ds, cfg.k, cfg.seed, cfg.stratify_subjects_by_label)?;
    let classes: Vec<String> = ds.classes().iter().map(|c| c.name().to_string()).collect();
    let mut rows = Vec::new();
    for config in cfg.dataset_configs() {
        for spec in seeded_classifiers(cfg) {
            let outcome = run_cv(ds, &plan, &spec, &cfg.cv_options(config))?;
            let slices = cfg
                .slice_attributes
                .iter()
                .map(|a| slice_report(&outcome.predictions, &classes, a.name()))
                .collect::<std::result::Result<_, _>>()?;
            rows.push(RunRow {
                dataset_config: config,
                description: config.description().to_string(),
                classifier: spec.kind_name().to_string(),
                spec,
                report: outcome.report,
                slices,
            });
        }
    }
    Ok(RunReport {
        label_scheme: ds.scheme,
        granularity: cfg.granularity,
        n_subjects: ds.subjects().len(),
        n_samples: ds.len(),
        k: cfg.k,
        class_distribution: class_distribution(&ds.samples, None),
        rows,
        excluded: data.excluded.clone(),
        quality: data.quality.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub dataset_config: DatasetConfig,
    pub classifier: String,
    pub report: AblationReport,
}

pub fn ablate(cfg: &ExperimentConfig, data: &PreparedData, study: AblationStudy) -> Result<Vec<AblationEntry>> {
    let ds = &data.dataset;
    let plan = fold_plan(ds, cfg.k, cfg.seed, cfg.stratify_subjects_by_label)?;
    let groupings = cfg.ablation.groupings.clone().unwrap_or_else(default_groupings);
    let mut out = Vec::new();
    for config in cfg.dataset_configs() {
        let opts = cfg.cv_options(config);
        for spec in seeded_classifiers(cfg) {
            let report = match study {
                AblationStudy::TopK => ablation_topk(ds, &plan, &spec, &opts, &cfg.ablation.fractions)?,
                AblationStudy::Category => ablation_category(ds, &plan, &spec, &opts, &groupings)?,
                AblationStudy::Pairwise => ablation_pairwise(ds, &plan, &spec, &opts, cfg.stratify_subjects_by_label)?,
            };
            out.push(AblationEntry {
                dataset_config: config,
                classifier: spec.kind_name().to_string(),
                report,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub feature: String,
    pub score: f64,
    /// Spread across permutation repeats; absent for impurity scores.
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub dataset_config: DatasetConfig,
    pub classifier: String,
    /// Correlation pruning is fitted once on all samples for importance.
    pub n_features: usize,
    /// Sorted descending, ties by feature name.
    pub impurity: Option<Vec<ImportanceRow>>,
    pub permutation: Vec<ImportanceRow>,
    pub permutation_metric: ScoreMetric,
    pub notices: Vec<String>,
}

fn sorted_rows(names: &[String], scores: &[f64], std: Option<&[f64]>) -> Vec<ImportanceRow> {
    let mut rows: Vec<ImportanceRow> = names
        .iter()
        .enumerate()
        .map(|(i, n)| ImportanceRow {
            feature: n.clone(),
            score: scores[i],
            std: std.map(|s| s[i]),
        })
        .collect();
    rows.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.feature.cmp(&b.feature)));
    rows
}

/// Impurity importance of a model fitted on all samples, and permutation
/// importance measured on held-out folds (each fold's model is scored on its
/// own test samples; drops are pooled over folds and repeats).
pub fn importance(cfg: &ExperimentConfig, data: &PreparedData) -> Result<Vec<ImportanceEntry>> {
    let ds = &data.dataset;
    let plan = fold_plan(ds, cfg.k, cfg.seed, cfg.stratify_subjects_by_label)?;
    let labels = ds.label_indices();
    let n_classes = ds.classes().len();
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut out = Vec::new();
    for config in cfg.dataset_configs() {
        let cols = crate::eval::fold_columns(ds, &cfg.cv_options(config), &all)?;
        let x = ds.features.select_columns(&cols);
        let names: Vec<String> = cols.iter().map(|&c| ds.feature_names[c].clone()).collect();
        for spec in seeded_classifiers(cfg) {
            let mut notices = Vec::new();
            let impurity = if spec.is_tree_based() {
                let model = models::fit(&spec, &x, &labels, n_classes)?;
                Some(sorted_rows(&names, &impurity_importance(&model)?, None))
            } else {
                notices.push(format!(
                    "impurity importance omitted: {} is not tree-based",
                    spec.kind_name()
                ));
                None
            };

            let mut sum = vec![0.0; cols.len()];
            let mut sum_sq = vec![0.0; cols.len()];
            let mut folds = 0usize;
            for f in 0..plan.k {
                let (train, test): (Vec<usize>, Vec<usize>) =
                    all.iter().partition(|&&r| plan.fold_of(&ds.samples[r].subject_id) != Some(f));
                if test.is_empty() || train.is_empty() {
                    continue;
                }
                let y_train: Vec<usize> = train.iter().map(|&r| labels[r]).collect();
                let y_test: Vec<usize> = test.iter().map(|&r| labels[r]).collect();
                let fold_spec = ClassifierSpec {
                    seed: seed::derive(spec.seed, f as u64),
                    ..spec.clone()
                };
                let model = models::fit(&fold_spec, &x.select_rows(&train), &y_train, n_classes)?;
                let perm = permutation_importance(
                    &model,
                    &x.select_rows(&test),
                    &y_test,
                    cfg.importance.metric,
                    cfg.importance.n_repeats,
                    seed::derive_path(cfg.seed, &[PERMUTATION_STREAM, f as u64]),
                )?;
                for j in 0..cols.len() {
                    sum[j] += perm.mean[j];
                    sum_sq[j] += perm.std[j] * perm.std[j] + perm.mean[j] * perm.mean[j];
                }
                folds += 1;
            }
            let n = folds.max(1) as f64;
            let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
            let std: Vec<f64> = sum_sq
                .iter()
                .zip(&mean)
                .map(|(s, m)| (s / n - m * m).max(0.0).sqrt())
                .collect();
            out.push(ImportanceEntry {
                dataset_config: config,
                classifier: spec.kind_name().to_string(),
                n_features: cols.len(),
                impurity,
                permutation: sorted_rows(&names, &mean, Some(&std)),
                permutation_metric: cfg.importance.metric,
                notices,
            });
        }
    }
    Ok(out)
}

/// Where the experiment seed came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    #[default]
    Config,
    /// The `FACECUE_SEED` environment variable.
    Environment,
    CommandLine,
}

/// Everything needed to reproduce a command's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub fold_plan_seed: u64,
    pub classifier_seed: u64,
    pub parallel: bool,
    pub jobs: Option<usize>,
    pub inputs: Vec<InputFile>,
    pub excluded: Vec<Exclusion>,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub bytes: u64,
}

impl RunMeta {
    pub fn new(command: &str, cfg: &ExperimentConfig, seed_source: SeedSource, jobs: Option<usize>, data: &PreparedData) -> Self {
        let mut inputs = vec![cfg.manifest_path.clone()];
        let dir = cfg.manifest_path.parent().unwrap_or(Path::new("."));
        if let Ok(sessions) = crate::openface::load_manifest_with(&cfg.manifest_path, ManifestMode::Lenient) {
            inputs.extend(sessions.sessions.iter().map(|s| s.resolve_path(dir)));
        }
        Self {
            tool: "facecue".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: cfg.clone(),
            seed: cfg.seed,
            seed_source,
            fold_plan_seed: cfg.seed,
            classifier_seed: seed::derive(cfg.seed, MODEL_STREAM),
            parallel: cfg!(feature = "parallel"),
            jobs,
            inputs: inputs
                .into_iter()
                .map(|p| InputFile {
                    bytes: fs::metadata(&p).map(|m| m.len()).unwrap_or(0),
                    path: p,
                })
                .collect(),
            excluded: data.excluded.clone(),
            warnings: data.warnings.clone(),
            outputs: Vec::new(),
        }
    }
}

/// Writes `files` into `dir`. If any write fails, files already written by
/// this call are removed.
pub fn write_outputs(dir: &Path, files: &[(String, String)]) -> Result<Vec<PathBuf>> {
    let fail = |path: &Path, source| Error::Output {
        path: path.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(|e| fail(dir, e))?;
    let mut written = Vec::new();
    for (name, contents) in files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, contents) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(fail(&path, e));
        }
        written.push(path);
    }
    Ok(written)
}

fn with_meta(mut files: Vec<(String, String)>, mut meta: RunMeta) -> Vec<(String, String)> {
    meta.outputs = files.iter().map(|(n, _)| n.clone()).collect();
    meta.outputs.push("run_meta.json".into());
    files.push(("run_meta.json".into(), report::to_json(&meta)));
    files
}

/// `run` plus report files: metrics.json, metrics.csv, summary.md and
/// run_meta.json.
pub fn run_to_dir(cfg: &ExperimentConfig, out: &Path, seed_source: SeedSource, jobs: Option<usize>) -> Result<RunReport> {
    let data = load_dataset(cfg)?;
    let rep = run(cfg, &data)?;
    let files = vec![
        ("metrics.json".to_string(), report::to_json(&rep)),
        ("metrics.csv".to_string(), report::run_csv(&rep)),
        ("summary.md".to_string(), report::run_markdown(&rep)),
    ];
    write_outputs(out, &with_meta(files, RunMeta::new("run", cfg, seed_source, jobs, &data)))?;
    Ok(rep)
}

pub fn ablate_to_dir(
    cfg: &ExperimentConfig,
    study: AblationStudy,
    out: &Path,
    seed_source: SeedSource,
    jobs: Option<usize>,
) -> Result<Vec<AblationEntry>> {
    let data = load_dataset(cfg)?;
    let entries = ablate(cfg, &data, study)?;
    let files = vec![
        ("ablation.json".to_string(), report::to_json(&entries)),
        ("ablation.csv".to_string(), report::ablation_csv(&entries)),
        ("ablation.md".to_string(), report::ablation_markdown(&entries)),
    ];
    let command = format!("ablate {}", study.name());
    write_outputs(out, &with_meta(files, RunMeta::new(&command, cfg, seed_source, jobs, &data)))?;
    Ok(entries)
}

pub fn importance_to_dir(
    cfg: &ExperimentConfig,
    out: &Path,
    seed_source: SeedSource,
    jobs: Option<usize>,
) -> Result<Vec<ImportanceEntry>> {
    let data = load_dataset(cfg)?;
    let entries = importance(cfg, &data)?;
    let mut files = vec![("importance.json".to_string(), report::to_json(&entries))];
    if entries.iter().any(|e| e.impurity.is_some()) {
        files.push(("importance_impurity.csv".to_string(), report::importance_csv(&entries, true)));
    }
    files.push(("importance_permutation.csv".to_string(), report::importance_csv(&entries, false)));
    files.push(("importance.md".to_string(), report::importance_markdown(&entries)));
    write_outputs(out, &with_meta(files, RunMeta::new("importance", cfg, seed_source, jobs, &data)))?;
    Ok(entries)
}

/// Per-category column census of the recordings named by a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestCheck {
    pub subject_id: String,
    pub path: PathBuf,
    pub n_frames: usize,
    pub fps: f64,
    pub duration_s: f64,
    pub n_columns: usize,
    pub categories: BTreeMap<String, usize>,
    pub failed_frame_fraction: Option<f64>,
}

pub fn ingest_check(sessions: &[SessionManifest], dir: &Path) -> Vec<(String, Result<IngestCheck>)> {
    par::map_range(sessions.len(), |i| {
        let m = &sessions[i];
        let path = m.resolve_path(dir);
        let res = read_openface_file(&path, &m.subject_id, m.fps)
            .map(|t| IngestCheck {
                subject_id: m.subject_id.clone(),
                path: path.clone(),
                n_frames: t.n_frames(),
                fps: t.fps(),
                duration_s: t.duration_s(),
                n_columns: t.schema().len(),
                categories: t.schema().counts().into_iter().map(|(c, n)| (c.to_string(), n)).collect(),
                failed_frame_fraction: t.failed_frame_fraction(),
            })
            .map_err(Error::from);
        (m.subject_id.clone(), res)
    })
}
