//! Reference classifiers: logistic regression, random forest and gradient
//! boosting, behind the common [`Scorer`] interface.

mod boosting;
mod forest;
mod logistic;
pub mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use boosting::{fit_gbc, BoostingParams, GradientBoostingModel};
pub use forest::{fit_random_forest, ForestParams, RandomForestModel};
pub use logistic::{fit_logistic, logistic_gradient, LogisticModel, LogisticParams, LOGISTIC_GRADIENT_TOL};
pub use tree::DecisionTree;

use crate::dataset::MatrixView;
use crate::{Error, Result};

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn check_training(x: MatrixView<'_>, labels: &[u8], min_rows: usize) -> Result<()> {
    if x.n_cols() == 0 {
        return Err(Error::InvalidInput("no feature columns".into()));
    }
    if x.n_rows() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature rows but {} labels",
            x.n_rows(),
            labels.len()
        )));
    }
    if labels.len() < min_rows {
        return Err(Error::TooSmall {
            rows: labels.len(),
            min: min_rows,
        });
    }
    if let Some(i) = labels.iter().position(|&y| y > 1) {
        return Err(Error::InvalidLabel {
            row: i,
            value: labels[i].to_string(),
        });
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::DegenerateLabels);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logit,
    Rf,
    Gbc,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [Self::Logit, Self::Rf, Self::Gbc];

    pub fn name(self) -> &'static str {
        match self {
            Self::Logit => "logit",
            Self::Rf => "rf",
            Self::Gbc => "gbc",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logit" | "logistic" => Ok(Self::Logit),
            "rf" | "random_forest" => Ok(Self::Rf),
            "gbc" | "gradient_boosting" => Ok(Self::Gbc),
            other => Err(Error::InvalidInput(format!("unknown model `{other}`"))),
        }
    }
}

/// Hyperparameters for every model family.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub logistic: LogisticParams,
    pub random_forest: ForestParams,
    pub gradient_boosting: BoostingParams,
}

/// A fitted classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scorer {
    Logistic(LogisticModel),
    RandomForest(RandomForestModel),
    GradientBoosting(GradientBoostingModel),
}

impl Scorer {
    pub fn fit(kind: ModelKind, x: MatrixView<'_>, labels: &[u8], config: &ModelConfig, seed: u64) -> Result<Self> {
        Ok(match kind {
            ModelKind::Logit => Self::Logistic(fit_logistic(x, labels, &config.logistic)?),
            ModelKind::Rf => Self::RandomForest(fit_random_forest(x, labels, &config.random_forest, seed)?),
            ModelKind::Gbc => Self::GradientBoosting(fit_gbc(x, labels, &config.gradient_boosting)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Logistic(_) => ModelKind::Logit,
            Self::RandomForest(_) => ModelKind::Rf,
            Self::GradientBoosting(_) => ModelKind::Gbc,
        }
    }

    pub fn predict_proba(&self, x: MatrixView<'_>) -> Result<Vec<f64>> {
        match self {
            Self::Logistic(m) => m.predict_proba(x),
            Self::RandomForest(m) => m.predict_proba(x),
            Self::GradientBoosting(m) => m.predict_proba(x),
        }
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// On-disk model: `{"format_version": 1, "feature_names": [...], "model": {"kind": ..., ...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub model: Scorer,
}

impl ModelFile {
    pub fn new(model: Scorer, feature_names: Vec<String>) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            feature_names,
            model,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: Self = serde_json::from_str(&text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        Ok(file)
    }
}
