use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::MatrixView;
use crate::{Error, Result};

use super::check_training;
use super::tree::{grow, Columns, DecisionTree, GiniCriterion, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Fraction of features drawn at each split; `None` means `sqrt(d) / d`.
    pub max_features_fraction: Option<f64>,
    pub bootstrap: bool,
    /// Average leaf fractions instead of counting hard votes.
    pub rf_leaf_averaging: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 12,
            max_features_fraction: None,
            bootstrap: true,
            rf_leaf_averaging: false,
        }
    }
}

impl ForestParams {
    pub fn feature_fraction(&self, n_features: usize) -> f64 {
        self.max_features_fraction
            .unwrap_or_else(|| (n_features as f64).sqrt() / n_features as f64)
    }
}

/// Random forest of Gini classification trees.
///
/// Each tree is grown on a bootstrap resample with per-split feature
/// subsampling. By default the predicted probability is the fraction of trees
/// voting for default, where a tree votes for default when its leaf's
/// positive fraction is at least one half.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub trees: Vec<DecisionTree>,
    pub n_trees: usize,
    pub max_depth: usize,
    pub max_features_fraction: f64,
    pub bootstrap: bool,
    pub leaf_averaging: bool,
    pub seed: u64,
}

impl RandomForestModel {
    pub fn n_features(&self) -> usize {
        self.trees.first().map_or(0, DecisionTree::n_features)
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let n = self.trees.len() as f64;
        if self.leaf_averaging {
            self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / n
        } else {
            let votes = self.trees.iter().filter(|t| t.predict_row(row) >= 0.5).count();
            votes as f64 / n
        }
    }

    pub fn predict_proba(&self, x: MatrixView<'_>) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_features() {
            return Err(Error::FeatureMismatch {
                expected: self.n_features(),
                got: x.n_cols(),
            });
        }
        Ok(x.iter_rows().take(x.n_rows()).map(|r| self.predict_row(r)).collect())
    }
}

pub fn fit_random_forest(
    x: MatrixView<'_>,
    labels: &[u8],
    params: &ForestParams,
    seed: u64,
) -> Result<RandomForestModel> {
    check_training(x, labels, 2)?;
    if params.n_trees == 0 {
        return Err(Error::InvalidInput("n_trees must be at least 1".into()));
    }
    let d = x.n_cols();
    let fraction = params.feature_fraction(d);
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "max_features_fraction {fraction} outside (0, 1]"
        )));
    }
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        max_features: ((fraction * d as f64).floor() as usize).clamp(1, d),
    };
    let cols = Columns::new(x);
    let n = cols.n_rows();
    let criterion = GiniCriterion { labels };

    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            // one independent stream per tree keeps the forest identical
            // regardless of scheduling
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow(&cols, &criterion, rows, tree_params, Some(&mut rng))
        })
        .collect();

    Ok(RandomForestModel {
        trees,
        n_trees: params.n_trees,
        max_depth: params.max_depth,
        max_features_fraction: fraction,
        bootstrap: params.bootstrap,
        leaf_averaging: params.rf_leaf_averaging,
        seed,
    })
}
