//! Synthetic cohorts in OpenFace format with controllable class signal.
//!
//! Every non-metadata column of a subject follows
//! `level + x_t`, where `x_t` is a stationary AR(1) process with innovation
//! standard deviation `noise_sd`, and `level` is the column's population base
//! value plus a per-subject offset (`subject_sd`) plus the class shift from
//! `effect`. AU presence columns are thresholded at zero.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{map_label, Class, DemographicAttribute, Demographics, LabelScheme};
use crate::matrix::Matrix;
use crate::openface::{
    frames_in, write_openface_csv, ColumnSchema, Education, FeatureCategory, FrameTable, Gender, HomeLocation,
    SessionManifest,
};
use crate::{par, seed};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("effect column `{0}` is not a canonical non-metadata OpenFace column")]
    InvalidEffectColumn(String),
    #[error("invalid cohort spec: {0}")]
    InvalidSpec(String),
    #[error("cannot write {path}: {source}")]
    IoFailure {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Mean shift per class, in feature units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassShift {
    pub anxious: f64,
    pub neutral: f64,
    pub non_anxious: f64,
}

impl ClassShift {
    pub fn for_class(&self, c: Class) -> f64 {
        match c {
            Class::Anxious => self.anxious,
            Class::Neutral => self.neutral,
            Class::NonAnxious => self.non_anxious,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemographicsDistribution {
    pub gender: BTreeMap<Gender, f64>,
    pub education: BTreeMap<Education, f64>,
    pub home_location: BTreeMap<HomeLocation, f64>,
}

impl Default for DemographicsDistribution {
    fn default() -> Self {
        Self {
            gender: [(Gender::Male, 0.5), (Gender::Female, 0.5)].into(),
            education: [(Education::Undergraduate, 0.5), (Education::Graduate, 0.5)].into(),
            home_location: [(HomeLocation::Rural, 0.5), (HomeLocation::Urban, 0.5)].into(),
        }
    }
}

/// Scales every effect for subjects in one demographic group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupEffect {
    pub attribute: DemographicAttribute,
    pub group: String,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub n_subjects: usize,
    pub fps: f64,
    pub duration_s: f64,
    /// Probabilities of Likert scores 1 to 5.
    pub likert_distribution: [f64; 5],
    /// Column name → per-class mean shift.
    pub effect: BTreeMap<String, ClassShift>,
    pub noise_sd: f64,
    pub ar_coefficient: f64,
    /// Between-subject standard deviation of column levels; `None` uses
    /// `noise_sd`.
    pub subject_sd: Option<f64>,
    pub demographics_distribution: DemographicsDistribution,
    pub group_effect: Option<GroupEffect>,
    pub age_range: (u32, u32),
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_subjects: 20,
            fps: 20.0,
            duration_s: 90.0,
            likert_distribution: [0.2; 5],
            effect: BTreeMap::new(),
            noise_sd: 0.5,
            ar_coefficient: 0.5,
            subject_sd: None,
            demographics_distribution: DemographicsDistribution::default(),
            group_effect: None,
            age_range: (18, 35),
            seed: 0,
        }
    }
}

fn check_distribution<K>(name: &str, d: &BTreeMap<K, f64>) -> Result<(), SynthError> {
    if d.values().any(|p| !(p.is_finite() && *p >= 0.0)) || (d.values().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(SynthError::InvalidSpec(format!(
            "{name} probabilities must be non-negative and sum to 1"
        )));
    }
    Ok(())
}

impl CohortSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.n_subjects == 0 {
            return bad("n_subjects must be positive");
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad("fps must be positive");
        }
        if !(self.duration_s.is_finite() && frames_in(self.duration_s, self.fps) >= 1) {
            return bad("duration_s must cover at least one frame");
        }
        let l = &self.likert_distribution;
        if l.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (l.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("likert_distribution must be non-negative and sum to 1");
        }
        if !(self.noise_sd.is_finite() && self.noise_sd > 0.0) {
            return bad("noise_sd must be positive");
        }
        if !(0.0..1.0).contains(&self.ar_coefficient) {
            return bad("ar_coefficient must lie in [0, 1)");
        }
        if let Some(s) = self.subject_sd {
            if !(s.is_finite() && s >= 0.0) {
                return bad("subject_sd must be non-negative");
            }
        }
        let d = &self.demographics_distribution;
        check_distribution("gender", &d.gender)?;
        check_distribution("education", &d.education)?;
        check_distribution("home_location", &d.home_location)?;
        if let Some(g) = &self.group_effect {
            if !g.attribute.groups().contains(&g.group.as_str()) {
                return bad("group_effect.group is not a value of its attribute");
            }
            if !g.multiplier.is_finite() {
                return bad("group_effect.multiplier must be finite");
            }
        }
        if self.age_range.0 == 0 || self.age_range.0 > self.age_range.1 {
            return bad("age_range must be a non-empty range of positive ages");
        }
        let schema = ColumnSchema::canonical();
        for (name, shift) in &self.effect {
            let ok = schema.index_of(name).is_some_and(|i| !schema.category(i).is_metadata());
            if !ok {
                return Err(SynthError::InvalidEffectColumn(name.clone()));
            }
            if ![shift.anxious, shift.neutral, shift.non_anxious].iter().all(|v| v.is_finite()) {
                return bad("effect shifts must be finite");
            }
        }
        Ok(())
    }

    pub fn subject_id(&self, i: usize) -> String {
        let width = self.n_subjects.to_string().len().max(3);
        format!("S{:0width$}", i + 1)
    }

    fn subject_sd(&self) -> f64 {
        self.subject_sd.unwrap_or(self.noise_sd)
    }
}

fn draw<K: Copy>(rng: &mut impl Rng, d: &BTreeMap<K, f64>) -> K {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (&k, &p) in d {
        if p > 0.0 {
            last = Some(k);
            acc += p;
            if u < acc {
                return k;
            }
        }
    }
    last.expect("validated distribution has positive mass")
}

fn draw_likert(rng: &mut impl Rng, p: &[f64; 5]) -> u8 {
    let map: BTreeMap<u8, f64> = (1..=5).zip(p.iter().copied()).collect();
    draw(rng, &map)
}

/// Population-level base value of every canonical column.
fn base_profile(spec: &CohortSpec, schema: &ColumnSchema) -> Vec<f64> {
    let mut rng = seed::rng(seed::derive(spec.seed, u64::MAX));
    (0..schema.len()).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Draws the manifest record of subject `i`.
pub fn subject_manifest(spec: &CohortSpec, i: usize) -> SessionManifest {
    let mut rng = seed::rng(seed::derive_path(spec.seed, &[i as u64, 0]));
    let self_report = draw_likert(&mut rng, &spec.likert_distribution);
    let d = &spec.demographics_distribution;
    let gender = draw(&mut rng, &d.gender);
    let education = draw(&mut rng, &d.education);
    let home_location = draw(&mut rng, &d.home_location);
    let age = rng.random_range(spec.age_range.0..=spec.age_range.1);
    let id = spec.subject_id(i);
    SessionManifest {
        file_path: format!("{id}.csv"),
        subject_id: id,
        self_report,
        gender,
        education,
        home_location,
        age,
        fps: Some(spec.fps),
        duration_s: Some(frames_in(spec.duration_s, spec.fps) as f64 / spec.fps),
    }
}

fn effect_multiplier(spec: &CohortSpec, m: &SessionManifest) -> f64 {
    match &spec.group_effect {
        Some(g) if g.attribute.value(&Demographics::from(m)) == g.group => g.multiplier,
        _ => 1.0,
    }
}

/// One subject's manifest record and frame table.
#[derive(Debug, Clone)]
pub struct SyntheticSubject {
    pub manifest: SessionManifest,
    pub table: FrameTable,
}

struct Prepared {
    schema: ColumnSchema,
    base: Vec<f64>,
    shifts: Vec<Option<ClassShift>>,
}

fn prepare(spec: &CohortSpec) -> Result<Prepared, SynthError> {
    spec.validate()?;
    let schema = ColumnSchema::canonical();
    let base = base_profile(spec, &schema);
    let shifts = (0..schema.len())
        .map(|j| spec.effect.get(schema.name(j)).copied())
        .collect();
    Ok(Prepared { schema, base, shifts })
}

fn generate_one(spec: &CohortSpec, prep: &Prepared, i: usize) -> SyntheticSubject {
    let manifest = subject_manifest(spec, i);
    let class = map_label(manifest.self_report, LabelScheme::Multiclass)
        .expect("drawn score is in range")
        .expect("multiclass never excludes");
    let multiplier = effect_multiplier(spec, &manifest);
    let n = frames_in(spec.duration_s, spec.fps);
    let schema = &prep.schema;
    let mut values = Matrix::zeros(n, schema.len());
    let mut rng = seed::rng(seed::derive_path(spec.seed, &[i as u64, 1]));

    let phi = spec.ar_coefficient;
    let stationary_sd = spec.noise_sd / (1.0 - phi * phi).sqrt();
    let subject_sd = spec.subject_sd();
    for j in 0..schema.len() {
        let name = schema.name(j);
        match name {
            "frame" => (0..n).for_each(|t| values.set(t, j, (t + 1) as f64)),
            "face_id" => {}
            "timestamp" => (0..n).for_each(|t| values.set(t, j, t as f64 / spec.fps)),
            "confidence" => (0..n).for_each(|t| values.set(t, j, rng.random_range(0.9..=1.0))),
            "success" => (0..n).for_each(|t| values.set(t, j, 1.0)),
            _ => {
                let offset: f64 = StandardNormal.sample(&mut rng);
                let shift = prep.shifts[j].map_or(0.0, |s| s.for_class(class)) * multiplier;
                let level = prep.base[j] + subject_sd * offset + shift;
                let presence = schema.category(j) == FeatureCategory::AUPresence;
                let z: f64 = StandardNormal.sample(&mut rng);
                let mut x = stationary_sd * z;
                for t in 0..n {
                    if t > 0 {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        x = phi * x + spec.noise_sd * e;
                    }
                    let v = level + x;
                    values.set(t, j, if presence { f64::from(u8::from(v > 0.0)) } else { v });
                }
            }
        }
    }
    let table = FrameTable::new(manifest.subject_id.clone(), schema.clone(), spec.fps, values)
        .expect("generated values are finite and well-shaped");
    SyntheticSubject { manifest, table }
}

/// Generates subject `i` alone.
pub fn generate_subject(spec: &CohortSpec, i: usize) -> Result<SyntheticSubject, SynthError> {
    if i >= spec.n_subjects {
        return Err(SynthError::InvalidSpec(format!("subject index {i} out of range")));
    }
    Ok(generate_one(spec, &prepare(spec)?, i))
}

/// Generates every subject and maps it through `f` without keeping all
/// frame tables in memory at once. Results are in subject order.
pub fn map_subjects<T, F>(spec: &CohortSpec, f: F) -> Result<Vec<T>, SynthError>
where
    T: Send,
    F: Fn(SyntheticSubject) -> T + Sync + Send,
{
    let prep = prepare(spec)?;
    Ok(par::map_range(spec.n_subjects, |i| f(generate_one(spec, &prep, i))))
}

/// Writes one `<subject>.csv` per subject plus `manifest.json` into
/// `out_dir`, creating it if needed. Returns the manifest records.
pub fn generate_cohort(spec: &CohortSpec, out_dir: &Path) -> Result<Vec<SessionManifest>, SynthError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::IoFailure { path, source }
    };
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let written = map_subjects(spec, |s| -> Result<SessionManifest, SynthError> {
        let path = out_dir.join(&s.manifest.file_path);
        let file = fs::File::create(&path).map_err(io(&path))?;
        write_openface_csv(&s.table, file).map_err(io(&path))?;
        Ok(s.manifest)
    })?;
    let manifest: Vec<SessionManifest> = written.into_iter().collect::<Result<_, _>>()?;
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io(&path))?;
    Ok(manifest)
}

/// Counts by class and demographic group plus recording statistics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub n_subjects: usize,
    pub multiclass: BTreeMap<Class, usize>,
    pub binary: BTreeMap<Class, usize>,
    pub gender: BTreeMap<String, usize>,
    pub education: BTreeMap<String, usize>,
    pub home_location: BTreeMap<String, usize>,
    pub mean_duration_s: Option<f64>,
    pub fps_range: Option<(f64, f64)>,
    pub mean_age: Option<f64>,
}

pub fn describe_cohort(manifest: &[SessionManifest]) -> CohortSummary {
    let mut s = CohortSummary {
        n_subjects: manifest.len(),
        ..Default::default()
    };
    for m in manifest {
        if let Ok(Some(c)) = map_label(m.self_report, LabelScheme::Multiclass) {
            *s.multiclass.entry(c).or_insert(0) += 1;
        }
        if let Ok(Some(c)) = map_label(m.self_report, LabelScheme::BinaryMain) {
            *s.binary.entry(c).or_insert(0) += 1;
        }
        let d = Demographics::from(m);
        for (attr, map) in [
            (DemographicAttribute::Gender, &mut s.gender),
            (DemographicAttribute::Education, &mut s.education),
            (DemographicAttribute::HomeLocation, &mut s.home_location),
        ] {
            *map.entry(attr.value(&d).to_string()).or_insert(0) += 1;
        }
    }
    let durations: Vec<f64> = manifest.iter().filter_map(|m| m.duration_s).collect();
    if !durations.is_empty() {
        s.mean_duration_s = Some(durations.iter().sum::<f64>() / durations.len() as f64);
    }
    let fps: Vec<f64> = manifest.iter().filter_map(|m| m.fps).collect();
    if !fps.is_empty() {
        let lo = fps.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = fps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        s.fps_range = Some((lo, hi));
    }
    if !manifest.is_empty() {
        s.mean_age = Some(manifest.iter().map(|m| f64::from(m.age)).sum::<f64>() / manifest.len() as f64);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::openface::{parse_manifest, parse_openface_csv, ManifestMode};

    fn small(seed: u64) -> CohortSpec {
        CohortSpec {
            n_subjects: 4,
            duration_s: 3.0,
            fps: 10.0,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = small(0);
        s.effect.insert("banana_7".into(), ClassShift::default());
        assert!(matches!(s.validate(), Err(SynthError::InvalidEffectColumn(_))));
        let mut s = small(0);
        s.effect.insert("timestamp".into(), ClassShift::default());
        assert!(matches!(s.validate(), Err(SynthError::InvalidEffectColumn(_))));
        let mut s = small(0);
        s.likert_distribution = [0.5, 0.5, 0.5, 0.0, 0.0];
        assert!(matches!(s.validate(), Err(SynthError::InvalidSpec(_))));
        let mut s = small(0);
        s.ar_coefficient = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_json_defaults() {
        let s: CohortSpec = serde_json::from_str(
            r#"{"n_subjects": 3, "seed": 9, "effect": {"pose_Rx": {"anxious": 2.0}}}"#,
        )
        .unwrap();
        assert_eq!(s.n_subjects, 3);
        assert_eq!(s.effect["pose_Rx"].anxious, 2.0);
        assert_eq!(s.effect["pose_Rx"].neutral, 0.0);
        assert!(serde_json::from_str::<CohortSpec>(r#"{"n_subject": 3}"#).is_err());
    }

    #[test]
    fn metadata_columns_are_consistent() {
        let s = generate_subject(&small(1), 0).unwrap();
        let t = &s.table;
        let col = |n: &str| t.schema().index_of(n).unwrap();
        assert_eq!(t.n_frames(), 30);
        for r in 0..t.n_frames() {
            assert_eq!(t.values().get(r, col("frame")), (r + 1) as f64);
            assert_eq!(t.values().get(r, col("timestamp")), r as f64 / 10.0);
            let c = t.values().get(r, col("confidence"));
            assert!((0.9..=1.0).contains(&c));
            assert_eq!(t.values().get(r, col("success")), 1.0);
            let au = t.values().get(r, col("AU12_c"));
            assert!(au == 0.0 || au == 1.0);
        }
    }

    #[test]
    fn written_cohort_round_trips_and_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = small(5);
        let ma = generate_cohort(&spec, a.path()).unwrap();
        generate_cohort(&spec, b.path()).unwrap();
        for name in ["manifest.json", "S001.csv", "S004.csv"] {
            assert_eq!(
                fs::read(a.path().join(name)).unwrap(),
                fs::read(b.path().join(name)).unwrap(),
                "{name}"
            );
        }
        let text = fs::read_to_string(a.path().join("manifest.json")).unwrap();
        assert_eq!(parse_manifest(&text, ManifestMode::Strict).unwrap().sessions, ma);
        let file = fs::File::open(a.path().join("S002.csv")).unwrap();
        let t = parse_openface_csv(file, "S002", None).unwrap();
        assert_eq!(t.schema().len(), 714);
        assert!((t.fps() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn unwritable_output_is_io_failure() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        assert!(matches!(
            generate_cohort(&small(0), &blocker.join("sub")),
            Err(SynthError::IoFailure { .. })
        ));
    }

    #[test]
    fn likert_marginals_match() {
        let spec = CohortSpec {
            n_subjects: 400,
            likert_distribution: [0.1, 0.3, 0.2, 0.25, 0.15],
            seed: 77,
            ..Default::default()
        };
        let mut counts = [0usize; 5];
        for i in 0..spec.n_subjects {
            counts[subject_manifest(&spec, i).self_report as usize - 1] += 1;
        }
        for (c, p) in counts.iter().zip(spec.likert_distribution) {
            assert!((*c as f64 / 400.0 - p).abs() <= 0.07, "{counts:?}");
        }
    }

    #[test]
    fn ar_variance_is_stationary() {
        let spec = CohortSpec {
            n_subjects: 1,
            duration_s: 2000.0,
            fps: 10.0,
            noise_sd: 0.5,
            ar_coefficient: 0.6,
            seed: 3,
            ..Default::default()
        };
        let s = generate_subject(&spec, 0).unwrap();
        let expected = 0.25 / (1.0 - 0.36);
        let col = s.table.values().column(s.table.schema().index_of("pose_Rx").unwrap());
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (col.len() - 1) as f64;
        assert!((var / expected - 1.0).abs() <= 0.2, "{var} vs {expected}");
    }

    #[test]
    fn describe_examples() {
        let spec = CohortSpec {
            n_subjects: 10,
            likert_distribution: [0.0, 0.0, 0.0, 0.0, 1.0],
            ..Default::default()
        };
        let m: Vec<SessionManifest> = (0..10).map(|i| subject_manifest(&spec, i)).collect();
        let d = describe_cohort(&m);
        assert_eq!(d.multiclass, [(Class::NonAnxious, 10)].into());
        assert_eq!(describe_cohort(&[]), CohortSummary::default());

        let spec = CohortSpec {
            n_subjects: 30,
            likert_distribution: [0.05, 0.05, 0.8, 0.05, 0.05],
            ..Default::default()
        };
        let m: Vec<SessionManifest> = (0..30).map(|i| subject_manifest(&spec, i)).collect();
        let d = describe_cohort(&m);
        let neutral = d.multiclass.get(&Class::Neutral).copied().unwrap_or(0);
        assert!(d.multiclass.iter().all(|(c, &n)| *c == Class::Neutral || n < neutral));
    }
}
