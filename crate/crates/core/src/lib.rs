//! Behavioral-cue anxiety detection over OpenFace facial-feature time series.
//!
//! The crate covers the whole path from raw OpenFace CSV output to evaluation
//! reports:
//!
//! * [`openface`] parses and validates per-frame feature tables and classifies
//!   every column into its feature category.
//! * [`featurize`] collapses recordings into fixed-length vectors (full-recording
//!   mean/std or windowed means) and prunes correlated features.
//! * [`dataset`] maps Likert self-reports to labels, assembles the seven
//!   dataset configurations and builds subject-grouped fold plans.
//! * [`models`] holds the from-scratch classifiers and feature importance.
//! * [`eval`] runs subject-independent cross-validation, ablations and
//!   demographic slicing.
//! * [`synth`] generates synthetic cohorts in OpenFace format.
//! * [`pipeline`] wires everything together behind an [`ExperimentConfig`].

pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod featurize;
pub mod matrix;
pub mod models;
pub mod openface;
mod par;
pub mod pipeline;
pub mod report;
pub mod seed;
pub mod synth;

pub use config::ExperimentConfig;
pub use error::{Error, ErrorClass};
pub use matrix::Matrix;

pub type Result<T, E = Error> = std::result::Result<T, E>;
