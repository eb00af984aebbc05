//! Recording-to-vector aggregation and correlation pruning.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::openface::{format_sig9, frames_in, FrameTable};

#[derive(Debug, Error)]
pub enum FeaturizeError {
    #[error("standard deviation needs at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("window of {window_s} s at {fps} fps holds no frames")]
    WindowTooSmall { window_s: f64, fps: f64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("correlation pruning needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("no statistics requested")]
    NoStats,
    #[error("malformed aggregated csv: {0}")]
    MalformedCsv(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stat {
    Mean,
    Std,
}

impl Stat {
    pub fn suffix(self) -> &'static str {
        match self {
            Stat::Mean => "__mean",
            Stat::Std => "__std",
        }
    }
}

/// Divisor used for the standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdDivisor {
    /// `n - 1`
    #[default]
    Sample,
    /// `n`
    Population,
}

/// One sample's flattened feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedVector {
    pub subject_id: String,
    pub chunk_index: Option<usize>,
    pub feature_names: Vec<String>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkSet {
    pub subject_id: String,
    pub window_s: f64,
    pub window_frames: usize,
    pub vectors: Vec<AggregatedVector>,
}

/// Strips a `__mean` / `__std` suffix, returning the base column and statistic.
pub fn split_feature_name(name: &str) -> Option<(&str, Stat)> {
    if let Some(base) = name.strip_suffix(Stat::Mean.suffix()) {
        Some((base, Stat::Mean))
    } else {
        name.strip_suffix(Stat::Std.suffix())
            .map(|base| (base, Stat::Std))
    }
}

/// Welford accumulator over one column.
#[derive(Clone, Copy, Default)]
struct Running {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn std(&self, divisor: StdDivisor) -> f64 {
        let d = match divisor {
            StdDivisor::Sample => self.n - 1,
            StdDivisor::Population => self.n,
        };
        (self.m2.max(0.0) / d as f64).sqrt()
    }
}

fn column_stats(table: &FrameTable, frames: std::ops::Range<usize>, cols: &[usize]) -> Vec<Running> {
    let values = table.values();
    let mut acc = vec![Running::default(); cols.len()];
    for r in frames {
        let row = values.row(r);
        for (a, &c) in acc.iter_mut().zip(cols) {
            a.push(row[c]);
        }
    }
    acc
}

/// Full-recording aggregation: one `<col>__mean` and/or `<col>__std` per
/// non-metadata column, mean block first, each block in schema order.
pub fn aggregate_full(
    table: &FrameTable,
    stats: &[Stat],
    divisor: StdDivisor,
) -> Result<AggregatedVector, FeaturizeError> {
    let want_mean = stats.contains(&Stat::Mean);
    let want_std = stats.contains(&Stat::Std);
    if !want_mean && !want_std {
        return Err(FeaturizeError::NoStats);
    }
    let n = table.n_frames();
    let min_frames = if want_std && divisor == StdDivisor::Sample { 2 } else { 1 };
    if n < min_frames {
        return Err(FeaturizeError::TooFewFrames(n));
    }
    let cols = table.schema().feature_indices();
    let acc = column_stats(table, 0..n, &cols);

    let width = cols.len() * (want_mean as usize + want_std as usize);
    let mut feature_names = Vec::with_capacity(width);
    let mut values = Vec::with_capacity(width);
    if want_mean {
        for (a, &c) in acc.iter().zip(&cols) {
            feature_names.push(format!("{}{}", table.schema().name(c), Stat::Mean.suffix()));
            values.push(a.mean);
        }
    }
    if want_std {
        for (a, &c) in acc.iter().zip(&cols) {
            feature_names.push(format!("{}{}", table.schema().name(c), Stat::Std.suffix()));
            values.push(a.std(divisor));
        }
    }
    Ok(AggregatedVector {
        subject_id: table.subject_id().to_string(),
        chunk_index: None,
        feature_names,
        values,
    })
}

/// Splits a recording into non-overlapping windows of `floor(window_s × fps)`
/// frames and reduces each to per-column means. A trailing partial window is
/// dropped.
pub fn chunk_and_flatten(table: &FrameTable, window_s: f64) -> Result<ChunkSet, FeaturizeError> {
    let window_frames = if window_s.is_finite() && window_s > 0.0 {
        frames_in(window_s, table.fps())
    } else {
        0
    };
    if window_frames == 0 {
        return Err(FeaturizeError::WindowTooSmall {
            window_s,
            fps: table.fps(),
        });
    }
    let cols = table.schema().feature_indices();
    let feature_names: Vec<String> = cols
        .iter()
        .map(|&c| format!("{}{}", table.schema().name(c), Stat::Mean.suffix()))
        .collect();
    let n_chunks = table.n_frames() / window_frames;
    let vectors = (0..n_chunks)
        .map(|k| {
            let start = k * window_frames;
            let acc = column_stats(table, start..start + window_frames, &cols);
            AggregatedVector {
                subject_id: table.subject_id().to_string(),
                chunk_index: Some(k),
                feature_names: feature_names.clone(),
                values: acc.iter().map(|a| a.mean).collect(),
            }
        })
        .collect();
    Ok(ChunkSet {
        subject_id: table.subject_id().to_string(),
        window_s,
        window_frames,
        vectors,
    })
}

/// Mean-centred copy of a column plus its sum of squares. Constant columns
/// (max == min) report a zero sum of squares exactly.
struct Centered {
    dev: Vec<f64>,
    ss: f64,
}

impl Centered {
    fn new(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let constant = x.iter().all(|&v| v == x[0]);
        if constant {
            return Self {
                dev: vec![0.0; x.len()],
                ss: 0.0,
            };
        }
        let dev: Vec<f64> = x.iter().map(|v| v - mean).collect();
        let ss = dev.iter().map(|d| d * d).sum();
        Self { dev, ss }
    }

    fn correlation(&self, other: &Centered) -> f64 {
        if self.ss == 0.0 || other.ss == 0.0 {
            return 0.0;
        }
        let cov: f64 = self.dev.iter().zip(&other.dev).map(|(a, b)| a * b).sum();
        (cov / (self.ss * other.ss).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Sample Pearson correlation; 0 when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, FeaturizeError> {
    if x.len() != y.len() {
        return Err(FeaturizeError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(FeaturizeError::TooFewSamples(x.len()));
    }
    Ok(Centered::new(x).correlation(&Centered::new(y)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub index: usize,
    /// The first kept column whose |r| exceeded the threshold.
    pub correlated_with: usize,
    pub abs_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneResult {
    pub kept_indices: Vec<usize>,
    pub dropped: Vec<DroppedFeature>,
    pub threshold: f64,
}

/// Greedy left-to-right correlation pruning.
///
/// Column `j` is kept iff `|r(j, k)| <= threshold` for every already-kept
/// column `k`; otherwise it is dropped against the first offending kept column.
pub fn prune_correlated(
    matrix: &Matrix,
    feature_names: &[String],
    threshold: f64,
) -> Result<PruneResult, FeaturizeError> {
    if feature_names.len() != matrix.cols() {
        return Err(FeaturizeError::LengthMismatch(
            feature_names.len(),
            matrix.cols(),
        ));
    }
    if matrix.rows() < 2 {
        return Err(FeaturizeError::TooFewSamples(matrix.rows()));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(FeaturizeError::InvalidThreshold(threshold));
    }
    let centered: Vec<Centered> = (0..matrix.cols())
        .map(|c| Centered::new(&matrix.column(c)))
        .collect();

    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    for (j, col) in centered.iter().enumerate() {
        let hit = kept.iter().find_map(|&k| {
            let r = col.correlation(&centered[k]).abs();
            (r > threshold).then_some((k, r))
        });
        match hit {
            Some((k, r)) => dropped.push(DroppedFeature {
                index: j,
                correlated_with: k,
                abs_r: r,
            }),
            None => kept.push(j),
        }
    }
    Ok(PruneResult {
        kept_indices: kept,
        dropped,
        threshold,
    })
}

/// Stacks aligned vectors into a sample matrix. All vectors must share the
/// feature names of the first.
pub fn stack_vectors(vectors: &[AggregatedVector]) -> Result<(Matrix, Vec<String>), FeaturizeError> {
    let Some(first) = vectors.first() else {
        return Ok((Matrix::zeros(0, 0), Vec::new()));
    };
    let names = first.feature_names.clone();
    let mut rows = Vec::with_capacity(vectors.len());
    for v in vectors {
        if v.feature_names != names {
            return Err(FeaturizeError::LengthMismatch(
                v.feature_names.len(),
                names.len(),
            ));
        }
        rows.push(v.values.as_slice());
    }
    Ok((Matrix::from_rows(&rows), names))
}

/// Writes aggregated vectors as a wide CSV: `subject_id`, optional
/// `chunk_index`, then one column per feature.
pub fn write_aggregated_csv<W: Write>(
    vectors: &[AggregatedVector],
    writer: W,
) -> Result<(), FeaturizeError> {
    let mut w = csv::Writer::from_writer(writer);
    let Some(first) = vectors.first() else {
        w.flush()?;
        return Ok(());
    };
    let chunked = first.chunk_index.is_some();
    let mut header = vec!["subject_id".to_string()];
    if chunked {
        header.push("chunk_index".into());
    }
    header.extend(first.feature_names.iter().cloned());
    w.write_record(&header)?;
    for v in vectors {
        if v.feature_names != first.feature_names || v.chunk_index.is_some() != chunked {
            return Err(FeaturizeError::MalformedCsv(format!(
                "vector for `{}` does not match the first vector's layout",
                v.subject_id
            )));
        }
        let mut rec = vec![v.subject_id.clone()];
        if let Some(k) = v.chunk_index {
            rec.push(k.to_string());
        }
        rec.extend(v.values.iter().map(|&x| format_sig9(x)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_aggregated_csv<R: Read>(reader: R) -> Result<Vec<AggregatedVector>, FeaturizeError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("subject_id") {
        return Err(FeaturizeError::MalformedCsv("first column must be subject_id".into()));
    }
    let chunked = header.get(1) == Some("chunk_index");
    let offset = if chunked { 2 } else { 1 };
    let names: Vec<String> = header.iter().skip(offset).map(str::to_string).collect();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bad = |m: &str| FeaturizeError::MalformedCsv(format!("line {}: {m}", out.len() + 2));
        let chunk_index = if chunked {
            Some(rec[1].parse::<usize>().map_err(|_| bad("bad chunk_index"))?)
        } else {
            None
        };
        let values = rec
            .iter()
            .skip(offset)
            .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| bad("non-numeric or non-finite value"))?;
        out.push(AggregatedVector {
            subject_id: rec[0].to_string(),
            chunk_index,
            feature_names: names.clone(),
            values,
        });
    }
    Ok(out)
}
