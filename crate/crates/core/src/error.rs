use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;
use crate::dataset::DatasetError;
use crate::eval::EvalError;
use crate::featurize::FeaturizeError;
use crate::models::ModelError;
use crate::openface::IngestError;
use crate::synth::SynthError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Featurize(#[from] FeaturizeError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    /// Failure writing reports.
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no usable recordings: {0}")]
    NoData(String),
    #[error("recording `{0}` has a different column layout from the first recording")]
    SchemaMismatch(String),
}

/// Coarse failure class; the discriminant is the CLI exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad configuration, arguments or output location.
    Usage = 2,
    /// Input data that cannot be processed.
    Data = 3,
    /// A broken internal invariant.
    Internal = 4,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        self as i32
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorClass::Usage => "usage",
            ErrorClass::Data => "data",
            ErrorClass::Internal => "internal",
        }
    }
}

impl Error {
    /// Stable variant name for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(e) => match e {
                ConfigError::Read { .. } => "ConfigRead",
                ConfigError::Parse(_) => "ConfigParse",
                ConfigError::Invalid(_) => "InvalidConfig",
                ConfigError::BadSeedOverride(_) => "BadSeedOverride",
            },
            Error::Ingest(e) => match e {
                IngestError::UnknownColumn(_) => "UnknownColumn",
                IngestError::DuplicateColumn(_) => "DuplicateColumn",
                IngestError::EmptyFile => "EmptyFile",
                IngestError::RaggedRow { .. } => "RaggedRow",
                IngestError::NonNumericCell { .. } => "NonNumericCell",
                IngestError::NonFiniteCell { .. } => "NonFiniteCell",
                IngestError::InvalidFps(_) => "InvalidFps",
                IngestError::FpsUnavailable => "FpsUnavailable",
                IngestError::TooShort { .. } => "TooShort",
                IngestError::InvalidDuration(_) => "InvalidDuration",
                IngestError::MalformedManifest(_) => "MalformedManifest",
                IngestError::DuplicateSubject(_) => "DuplicateSubject",
                IngestError::LikertOutOfRange { .. } => "LikertOutOfRange",
                IngestError::Csv(_) => "Csv",
                IngestError::Io { .. } => "InputIo",
            },
            Error::Featurize(e) => match e {
                FeaturizeError::TooFewFrames(_) => "TooFewFrames",
                FeaturizeError::WindowTooSmall { .. } => "WindowTooSmall",
                FeaturizeError::LengthMismatch(..) => "LengthMismatch",
                FeaturizeError::TooFewSamples(_) => "TooFewSamples",
                FeaturizeError::InvalidThreshold(_) => "InvalidThreshold",
                FeaturizeError::NoStats => "NoStats",
                FeaturizeError::MalformedCsv(_) => "MalformedCsv",
                FeaturizeError::Csv(_) => "Csv",
                FeaturizeError::Io(_) => "InputIo",
            },
            Error::Dataset(e) => dataset_kind(e),
            Error::Model(e) => model_kind(e),
            Error::Eval(e) => match e {
                EvalError::UnknownLabel(_) => "UnknownLabel",
                EvalError::LengthMismatch(..) => "LengthMismatch",
                EvalError::EmptyMatrix => "EmptyMatrix",
                EvalError::SingleClass => "SingleClass",
                EvalError::FoldCoverage(_) => "FoldCoverage",
                EvalError::EmptyGrouping(_) => "EmptyGrouping",
                EvalError::ClassAbsent { .. } => "ClassAbsent",
                EvalError::NotTreeBased(_) => "NotTreeBased",
                EvalError::Model(m) => model_kind(m),
                EvalError::Dataset(d) => dataset_kind(d),
            },
            Error::Synth(e) => match e {
                SynthError::InvalidEffectColumn(_) => "InvalidEffectColumn",
                SynthError::InvalidSpec(_) => "InvalidSpec",
                SynthError::IoFailure { .. } => "IOFailure",
            },
            Error::Output { .. } => "IOFailure",
            Error::NoData(_) => "NoData",
            Error::SchemaMismatch(_) => "SchemaMismatch",
        }
    }

    pub fn class(&self) -> ErrorClass {
        use ErrorClass::*;
        match self {
            Error::Config(_) | Error::Output { .. } | Error::Synth(_) => Usage,
            Error::Ingest(_) | Error::Featurize(_) | Error::NoData(_) | Error::SchemaMismatch(_) => Data,
            Error::Dataset(e) => dataset_class(e),
            Error::Model(e) => model_class(e),
            Error::Eval(e) => match e {
                EvalError::EmptyGrouping(_) | EvalError::ClassAbsent { .. } | EvalError::NotTreeBased(_) => Usage,
                EvalError::SingleClass => Data,
                EvalError::UnknownLabel(_)
                | EvalError::LengthMismatch(..)
                | EvalError::EmptyMatrix
                | EvalError::FoldCoverage(_) => Internal,
                EvalError::Model(m) => model_class(m),
                EvalError::Dataset(d) => dataset_class(d),
            },
        }
    }
}

fn dataset_kind(e: &DatasetError) -> &'static str {
    match e {
        DatasetError::LikertOutOfRange(_) => "LikertOutOfRange",
        DatasetError::SampleMisalignment(_) => "SampleMisalignment",
        DatasetError::ConfigUnavailable { .. } => "ConfigUnavailable",
        DatasetError::TooFewSubjects { .. } => "TooFewSubjects",
        DatasetError::InvalidFoldCount => "InvalidFoldCount",
        DatasetError::UnknownAttribute(_) => "UnknownAttribute",
        DatasetError::Featurize(_) => "Featurize",
    }
}

fn dataset_class(e: &DatasetError) -> ErrorClass {
    match e {
        DatasetError::LikertOutOfRange(_) | DatasetError::Featurize(_) => ErrorClass::Data,
        DatasetError::SampleMisalignment(_) => ErrorClass::Internal,
        DatasetError::ConfigUnavailable { .. }
        | DatasetError::TooFewSubjects { .. }
        | DatasetError::InvalidFoldCount
        | DatasetError::UnknownAttribute(_) => ErrorClass::Usage,
    }
}

fn model_kind(e: &ModelError) -> &'static str {
    match e {
        ModelError::EmptyTrainingSet => "EmptyTrainingSet",
        ModelError::DimensionMismatch { .. } => "DimensionMismatch",
        ModelError::KTooLarge { .. } => "KTooLarge",
        ModelError::NonFiniteLoss(_) => "NonFiniteLoss",
        ModelError::UnsupportedModel(_) => "UnsupportedModel",
        ModelError::InvalidHyperparameter(_) => "InvalidHyperparameter",
        ModelError::InvalidLabel { .. } => "InvalidLabel",
        ModelError::Document(_) => "ModelDocument",
    }
}

fn model_class(e: &ModelError) -> ErrorClass {
    match e {
        ModelError::KTooLarge { .. }
        | ModelError::NonFiniteLoss(_)
        | ModelError::UnsupportedModel(_)
        | ModelError::InvalidHyperparameter(_) => ErrorClass::Usage,
        ModelError::EmptyTrainingSet | ModelError::Document(_) => ErrorClass::Data,
        ModelError::DimensionMismatch { .. } | ModelError::InvalidLabel { .. } => ErrorClass::Internal,
    }
}
