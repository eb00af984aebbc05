//! OpenFace CSV ingestion: column catalog, frame tables, trimming and the
//! session manifest.
//!
//! OpenFace 2.x writes one row per video frame. The canonical header has 714
//! columns: five metadata fields followed by 709 features (gaze, eye
//! landmarks, head pose, face landmarks, shape parameters and action units).
//! The schema of a parsed file is taken from its own header; every column name
//! must be recognized by [`classify_column`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("empty file: no header or no frames")]
    EmptyFile,
    #[error("ragged row at line {line}: expected {expected} cells, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("non-numeric cell at line {line}, column `{column}`: {value:?}")]
    NonNumericCell {
        line: u64,
        column: String,
        value: String,
    },
    #[error("non-finite cell at line {line}, column `{column}`: {value:?}")]
    NonFiniteCell {
        line: u64,
        column: String,
        value: String,
    },
    #[error("invalid fps {0}")]
    InvalidFps(f64),
    #[error("fps not supplied and cannot be inferred from a timestamp column")]
    FpsUnavailable,
    #[error("recording `{subject_id}` is {duration_s:.3} s long, shorter than {target_s} s")]
    TooShort {
        subject_id: String,
        duration_s: f64,
        target_s: f64,
    },
    #[error("invalid target duration {0}")]
    InvalidDuration(f64),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("duplicate subject `{0}` in manifest")]
    DuplicateSubject(String),
    #[error("self-report {score} for subject `{subject_id}` is outside the 1-5 Likert range")]
    LikertOutOfRange { subject_id: String, score: i64 },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Feature category of one OpenFace output column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureCategory {
    Metadata,
    Gaze,
    EyeLandmark2D,
    EyeLandmark3D,
    PoseLocation,
    PoseRotation,
    FaceLandmark2D,
    FaceLandmark3D,
    RigidShape,
    NonRigidShape,
    AUIntensity,
    AUPresence,
}

impl FeatureCategory {
    pub const ALL: [FeatureCategory; 12] = [
        FeatureCategory::Metadata,
        FeatureCategory::Gaze,
        FeatureCategory::EyeLandmark2D,
        FeatureCategory::EyeLandmark3D,
        FeatureCategory::PoseLocation,
        FeatureCategory::PoseRotation,
        FeatureCategory::FaceLandmark2D,
        FeatureCategory::FaceLandmark3D,
        FeatureCategory::RigidShape,
        FeatureCategory::NonRigidShape,
        FeatureCategory::AUIntensity,
        FeatureCategory::AUPresence,
    ];

    pub fn is_metadata(self) -> bool {
        self == FeatureCategory::Metadata
    }

    pub fn is_shape(self) -> bool {
        matches!(
            self,
            FeatureCategory::RigidShape | FeatureCategory::NonRigidShape
        )
    }

    /// The coarse gaze-related set (gaze vectors plus both eye-landmark sets).
    pub fn is_gaze_related(self) -> bool {
        matches!(
            self,
            FeatureCategory::Gaze | FeatureCategory::EyeLandmark2D | FeatureCategory::EyeLandmark3D
        )
    }
}

impl fmt::Display for FeatureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

fn is_index(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Classifies an OpenFace column name by its naming convention.
///
/// Surrounding whitespace is ignored (OpenFace separates header cells with
/// `", "`).
pub fn classify_column(name: &str) -> Result<FeatureCategory, IngestError> {
    use FeatureCategory::*;
    let n = name.trim();
    let unknown = || IngestError::UnknownColumn(name.to_string());

    let category = match n {
        "frame" | "face_id" | "timestamp" | "confidence" | "success" => Metadata,
        "gaze_angle_x" | "gaze_angle_y" => Gaze,
        "pose_Tx" | "pose_Ty" | "pose_Tz" => PoseLocation,
        "pose_Rx" | "pose_Ry" | "pose_Rz" => PoseRotation,
        "p_scale" | "p_rx" | "p_ry" | "p_rz" | "p_tx" | "p_ty" => RigidShape,
        _ => {
            if let Some(rest) = n.strip_prefix("gaze_") {
                // gaze_0_x .. gaze_1_z
                match rest.as_bytes() {
                    [b'0' | b'1', b'_', b'x' | b'y' | b'z'] => Gaze,
                    _ => return Err(unknown()),
                }
            } else if let Some(rest) = n.strip_prefix("eye_lmk_") {
                let (axis, idx) = rest.split_once('_').ok_or_else(unknown)?;
                if !is_index(idx) {
                    return Err(unknown());
                }
                match axis {
                    "x" | "y" => EyeLandmark2D,
                    "X" | "Y" | "Z" => EyeLandmark3D,
                    _ => return Err(unknown()),
                }
            } else if let Some(idx) = n.strip_prefix("p_") {
                if is_index(idx) {
                    NonRigidShape
                } else {
                    return Err(unknown());
                }
            } else if let Some(rest) = n.strip_prefix("AU") {
                match rest.as_bytes() {
                    [a, b, b'_', b'r'] if a.is_ascii_digit() && b.is_ascii_digit() => AUIntensity,
                    [a, b, b'_', b'c'] if a.is_ascii_digit() && b.is_ascii_digit() => AUPresence,
                    _ => return Err(unknown()),
                }
            } else if let Some((axis, idx)) = n.split_once('_') {
                if !is_index(idx) {
                    return Err(unknown());
                }
                match axis {
                    "x" | "y" => FaceLandmark2D,
                    "X" | "Y" | "Z" => FaceLandmark3D,
                    _ => return Err(unknown()),
                }
            } else {
                return Err(unknown());
            }
        }
    };
    Ok(category)
}

const AU_INTENSITY: [u8; 17] = [1, 2, 4, 5, 6, 7, 9, 10, 12, 14, 15, 17, 20, 23, 25, 26, 45];
const AU_PRESENCE: [u8; 18] = [1, 2, 4, 5, 6, 7, 9, 10, 12, 14, 15, 17, 20, 23, 25, 26, 28, 45];

/// The 714 column names OpenFace's FeatureExtraction writes for a single face,
/// in file order.
pub fn canonical_header() -> Vec<String> {
    let mut h: Vec<String> = ["frame", "face_id", "timestamp", "confidence", "success"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for eye in 0..2 {
        for axis in ["x", "y", "z"] {
            h.push(format!("gaze_{eye}_{axis}"));
        }
    }
    h.push("gaze_angle_x".into());
    h.push("gaze_angle_y".into());
    for axis in ["x", "y"] {
        h.extend((0..56).map(|i| format!("eye_lmk_{axis}_{i}")));
    }
    for axis in ["X", "Y", "Z"] {
        h.extend((0..56).map(|i| format!("eye_lmk_{axis}_{i}")));
    }
    for p in ["Tx", "Ty", "Tz", "Rx", "Ry", "Rz"] {
        h.push(format!("pose_{p}"));
    }
    for axis in ["x", "y"] {
        h.extend((0..68).map(|i| format!("{axis}_{i}")));
    }
    for axis in ["X", "Y", "Z"] {
        h.extend((0..68).map(|i| format!("{axis}_{i}")));
    }
    for p in ["scale", "rx", "ry", "rz", "tx", "ty"] {
        h.push(format!("p_{p}"));
    }
    h.extend((0..34).map(|i| format!("p_{i}")));
    h.extend(AU_INTENSITY.iter().map(|au| format!("AU{au:02}_r")));
    h.extend(AU_PRESENCE.iter().map(|au| format!("AU{au:02}_c")));
    h
}

/// Ordered, classified column list of one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    columns: Vec<(String, FeatureCategory)>,
}

impl ColumnSchema {
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, IngestError> {
        let mut seen = HashSet::with_capacity(names.len());
        let mut columns = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref().trim();
            if !seen.insert(name.to_string()) {
                return Err(IngestError::DuplicateColumn(name.to_string()));
            }
            columns.push((name.to_string(), classify_column(name)?));
        }
        Ok(Self { columns })
    }

    pub fn canonical() -> Self {
        Self::from_names(&canonical_header()).expect("canonical header classifies")
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> &[(String, FeatureCategory)] {
        &self.columns
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn name(&self, i: usize) -> &str {
        &self.columns[i].0
    }

    pub fn category(&self, i: usize) -> FeatureCategory {
        self.columns[i].1
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|(n, _)| n == name)
    }

    /// Indices of all non-metadata columns, in schema order.
    pub fn feature_indices(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, (_, c))| !c.is_metadata())
            .map(|(i, _)| i)
            .collect()
    }

    /// Column count per category; categories absent from the schema map to 0.
    pub fn counts(&self) -> BTreeMap<FeatureCategory, usize> {
        let mut counts: BTreeMap<FeatureCategory, usize> =
            FeatureCategory::ALL.iter().map(|&c| (c, 0)).collect();
        for (_, c) in &self.columns {
            *counts.entry(*c).or_default() += 1;
        }
        counts
    }
}

/// One recording's per-frame feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTable {
    subject_id: String,
    schema: ColumnSchema,
    fps: f64,
    values: Matrix,
}

impl FrameTable {
    /// Validates and wraps a frame matrix. Values must be finite, `fps`
    /// positive, and the matrix must have one column per schema entry.
    pub fn new(
        subject_id: impl Into<String>,
        schema: ColumnSchema,
        fps: f64,
        values: Matrix,
    ) -> Result<Self, IngestError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(IngestError::InvalidFps(fps));
        }
        if values.rows() == 0 {
            return Err(IngestError::EmptyFile);
        }
        if values.cols() != schema.len() {
            return Err(IngestError::RaggedRow {
                line: 0,
                expected: schema.len(),
                found: values.cols(),
            });
        }
        if let Some(pos) = values.as_slice().iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos / values.cols(), pos % values.cols());
            return Err(IngestError::NonFiniteCell {
                line: r as u64 + 2,
                column: schema.name(c).to_string(),
                value: values.get(r, c).to_string(),
            });
        }
        Ok(Self {
            subject_id: subject_id.into(),
            schema,
            fps,
            values,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn schema(&self) -> &ColumnSchema {
        &self.schema
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn n_frames(&self) -> usize {
        self.values.rows()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_frames() as f64 / self.fps
    }

    /// Fraction of frames whose `success` flag is 0, when the column exists.
    pub fn failed_frame_fraction(&self) -> Option<f64> {
        let col = self.schema.index_of("success")?;
        let failed = (0..self.n_frames())
            .filter(|&r| self.values.get(r, col) == 0.0)
            .count();
        Some(failed as f64 / self.n_frames() as f64)
    }

    /// The first `n` frames as a new table. `n` must be in `1..=n_frames`.
    pub fn head(&self, n: usize) -> FrameTable {
        assert!(n >= 1 && n <= self.n_frames());
        let rows: Vec<usize> = (0..n).collect();
        FrameTable {
            subject_id: self.subject_id.clone(),
            schema: self.schema.clone(),
            fps: self.fps,
            values: self.values.select_rows(&rows),
        }
    }
}

/// `floor(seconds × fps)`, tolerant of representation error just below an integer.
pub fn frames_in(seconds: f64, fps: f64) -> usize {
    (seconds * fps + 1e-9).floor().max(0.0) as usize
}

/// Parses OpenFace CSV output.
///
/// With `fps == None` the rate is inferred as
/// `(n_frames - 1) / (last_timestamp - first_timestamp)`.
pub fn parse_openface_csv<R: Read>(
    reader: R,
    subject_id: &str,
    fps: Option<f64>,
) -> Result<FrameTable, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(IngestError::EmptyFile);
    }
    let names: Vec<&str> = header.iter().collect();
    let schema = ColumnSchema::from_names(&names)?;
    let width = schema.len();

    let mut data = Vec::new();
    let mut n_rows = 0usize;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(IngestError::RaggedRow {
                line,
                expected: width,
                found: record.len(),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| IngestError::NonNumericCell {
                line,
                column: schema.name(c).to_string(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(IngestError::NonFiniteCell {
                    line,
                    column: schema.name(c).to_string(),
                    value: cell.to_string(),
                });
            }
            data.push(v);
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(IngestError::EmptyFile);
    }
    let values = Matrix::from_vec(n_rows, width, data);
    let fps = match fps {
        Some(f) => f,
        None => infer_fps(&schema, &values)?,
    };
    FrameTable::new(subject_id, schema, fps, values)
}

fn infer_fps(schema: &ColumnSchema, values: &Matrix) -> Result<f64, IngestError> {
    let col = schema
        .index_of("timestamp")
        .ok_or(IngestError::FpsUnavailable)?;
    let n = values.rows();
    if n < 2 {
        return Err(IngestError::FpsUnavailable);
    }
    let span = values.get(n - 1, col) - values.get(0, col);
    if span.is_nan() || span <= 0.0 {
        return Err(IngestError::FpsUnavailable);
    }
    Ok((n - 1) as f64 / span)
}

/// Reads and parses one OpenFace file.
pub fn read_openface_file(
    path: &Path,
    subject_id: &str,
    fps: Option<f64>,
) -> Result<FrameTable, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_openface_csv(std::io::BufReader::new(file), subject_id, fps)
}

/// Formats `v` rounded to 9 significant digits, in the shortest decimal form
/// that parses back to the rounded value.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// Writes a frame table as OpenFace-style CSV with 9-significant-digit cells.
pub fn write_openface_csv<W: Write>(table: &FrameTable, writer: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    let header: Vec<&str> = table.schema.names().collect();
    writeln!(w, "{}", header.join(","))?;
    let mut line = String::new();
    for r in 0..table.n_frames() {
        line.clear();
        for (c, v) in table.values.row(r).iter().enumerate() {
            if c > 0 {
                line.push(',');
            }
            line.push_str(&format_sig9(*v));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()
}

/// Keeps the first `floor(target_s × fps)` frames.
///
/// Recordings shorter than `target_s` are rejected with
/// [`IngestError::TooShort`]; they are excluded from the study.
pub fn trim_to_duration(table: &FrameTable, target_s: f64) -> Result<FrameTable, IngestError> {
    if !(target_s.is_finite() && target_s > 0.0) {
        return Err(IngestError::InvalidDuration(target_s));
    }
    let keep = frames_in(target_s, table.fps);
    if table.n_frames() < keep || keep == 0 {
        return Err(IngestError::TooShort {
            subject_id: table.subject_id.clone(),
            duration_s: table.duration_s(),
            target_s,
        });
    }
    Ok(table.head(keep))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Education {
    Undergraduate,
    Graduate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HomeLocation {
    Rural,
    Urban,
}

/// One participant's session record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub subject_id: String,
    pub file_path: String,
    pub self_report: u8,
    pub gender: Gender,
    pub education: Education,
    pub home_location: HomeLocation,
    pub age: u32,
    /// Sampling rate, required when the CSV has no `timestamp` column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

impl SessionManifest {
    /// `file_path` resolved against the directory holding the manifest.
    pub fn resolve_path(&self, manifest_dir: &Path) -> PathBuf {
        let p = Path::new(&self.file_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_dir.join(p)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ManifestMode {
    #[default]
    Strict,
    /// Unknown fields produce warnings instead of errors.
    Lenient,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedManifest {
    pub sessions: Vec<SessionManifest>,
    pub warnings: Vec<String>,
}

const MANIFEST_FIELDS: [&str; 9] = [
    "subject_id",
    "file_path",
    "self_report",
    "gender",
    "education",
    "home_location",
    "age",
    "fps",
    "duration_s",
];

#[derive(Deserialize)]
struct RawSession {
    subject_id: String,
    file_path: String,
    self_report: i64,
    gender: Gender,
    education: Education,
    home_location: HomeLocation,
    age: i64,
    #[serde(default)]
    fps: Option<f64>,
    #[serde(default)]
    duration_s: Option<f64>,
}

/// Parses a manifest from JSON text.
pub fn parse_manifest(text: &str, mode: ManifestMode) -> Result<LoadedManifest, IngestError> {
    let malformed = |m: String| IngestError::MalformedManifest(m);
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    let records = value
        .as_array()
        .ok_or_else(|| malformed("top level must be a JSON array".into()))?;

    let mut out = LoadedManifest::default();
    let mut seen = HashSet::new();
    for (i, record) in records.iter().enumerate() {
        let obj = record
            .as_object()
            .ok_or_else(|| malformed(format!("record {i} is not an object")))?;
        let mut obj = obj.clone();
        let unknown: Vec<String> = obj
            .keys()
            .filter(|k| !MANIFEST_FIELDS.contains(&k.as_str()))
            .cloned()
            .collect();
        for key in unknown {
            match mode {
                ManifestMode::Strict => {
                    return Err(malformed(format!("record {i}: unknown field `{key}`")))
                }
                ManifestMode::Lenient => {
                    out.warnings
                        .push(format!("record {i}: ignoring unknown field `{key}`"));
                    obj.remove(&key);
                }
            }
        }
        let raw: RawSession = serde_json::from_value(serde_json::Value::Object(obj))
            .map_err(|e| malformed(format!("record {i}: {e}")))?;
        if !(1..=5).contains(&raw.self_report) {
            return Err(IngestError::LikertOutOfRange {
                subject_id: raw.subject_id,
                score: raw.self_report,
            });
        }
        if raw.age <= 0 || raw.age > u32::MAX as i64 {
            return Err(malformed(format!("record {i}: age must be a positive integer")));
        }
        if let Some(f) = raw.fps {
            if !(f.is_finite() && f > 0.0) {
                return Err(malformed(format!("record {i}: fps must be positive")));
            }
        }
        if raw.subject_id.is_empty() {
            return Err(malformed(format!("record {i}: empty subject_id")));
        }
        if !seen.insert(raw.subject_id.clone()) {
            return Err(IngestError::DuplicateSubject(raw.subject_id));
        }
        out.sessions.push(SessionManifest {
            subject_id: raw.subject_id,
            file_path: raw.file_path,
            self_report: raw.self_report as u8,
            gender: raw.gender,
            education: raw.education,
            home_location: raw.home_location,
            age: raw.age as u32,
            fps: raw.fps,
            duration_s: raw.duration_s,
        });
    }
    Ok(out)
}

/// Loads and validates a manifest file in strict mode.
pub fn load_manifest(path: &Path) -> Result<Vec<SessionManifest>, IngestError> {
    Ok(load_manifest_with(path, ManifestMode::Strict)?.sessions)
}

pub fn load_manifest_with(path: &Path, mode: ManifestMode) -> Result<LoadedManifest, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(&text, mode)
}
