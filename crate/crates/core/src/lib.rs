//! Probability-of-default calibration toolkit.
//!
//! The crate is organised around a small number of value types that flow
//! between stages:
//!
//! - [`dataset`]: time-ordered loan tables, chronological 60/20/20 splits and
//!   seeded synthetic generators.
//! - [`metrics`]: Brier score (per loan and pooled by grade), ROC curve,
//!   AUROC, Gini and reliability bins over [`metrics::LabeledScores`].
//! - [`calibrators`]: identity, Platt sigmoid and isotonic (PAVA) recalibration.
//! - [`models`]: logistic regression, a hard-vote random forest and a
//!   log-loss gradient boosting classifier.
//! - [`harness`]: the model × calibrator benchmark grid run on chronological
//!   splits, Brier normalisation against the raw logistic model, and
//!   five-number summaries across datasets.
//! - [`config`], [`report`] and [`plot`]: run configuration, report bundles
//!   and dependency-free SVG/CSV figure output used by the CLI.

pub mod calibrators;
pub mod config;
pub mod dataset;
mod error;
pub mod harness;
pub mod metrics;
pub mod models;
mod numeric;
pub mod plot;
pub mod report;

pub use error::{Error, Result};
