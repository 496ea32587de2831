use serde::{Deserialize, Serialize};

use crate::dataset::MatrixView;
use crate::{Error, Result};

use super::check_training;
use super::tree::{grow, Columns, DecisionTree, NewtonCriterion, TreeParams};
use super::{sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostingParams {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
}

impl Default for BoostingParams {
    fn default() -> Self {
        Self {
            n_stages: 200,
            learning_rate: 0.1,
            max_depth: 3,
        }
    }
}

/// Gradient boosting on log loss: `P(default) = σ(F₀ + η Σ_t tree_t(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoostingModel {
    pub initial_log_odds: f64,
    pub stages: Vec<DecisionTree>,
    pub learning_rate: f64,
    pub n_stages: usize,
    pub max_depth: usize,
    /// Mean training log loss before any stage and after each stage.
    pub train_loss: Vec<f64>,
}

impl GradientBoostingModel {
    pub fn n_features(&self) -> usize {
        self.stages.first().map_or(0, DecisionTree::n_features)
    }

    pub fn raw_score(&self, row: &[f64]) -> f64 {
        self.initial_log_odds + self.learning_rate * self.stages.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: MatrixView<'_>) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_features() {
            return Err(Error::FeatureMismatch {
                expected: self.n_features(),
                got: x.n_cols(),
            });
        }
        Ok(x.iter_rows()
            .take(x.n_rows())
            .map(|r| sigmoid(self.raw_score(r)))
            .collect())
    }
}

fn mean_log_loss(f: &[f64], labels: &[u8]) -> f64 {
    f.iter()
        .zip(labels)
        .map(|(&z, &y)| softplus(z) - f64::from(y) * z)
        .sum::<f64>()
        / f.len() as f64
}

/// Stage `t` fits a squared-error regression tree to the residuals
/// `y − σ(F_{t−1})`; each leaf then takes one Newton step
/// `Σ residual / Σ p(1 − p)`.
///
/// If a stage would raise the training log loss its leaf values are halved
/// until it does not (down to zero), so the loss trace never increases.
pub fn fit_gbc(x: MatrixView<'_>, labels: &[u8], params: &BoostingParams) -> Result<GradientBoostingModel> {
    check_training(x, labels, 2)?;
    if params.n_stages == 0 {
        return Err(Error::InvalidInput("n_stages must be at least 1".into()));
    }
    let lr = params.learning_rate;
    if !(lr > 0.0 && lr <= 1.0) {
        return Err(Error::InvalidInput(format!("learning_rate {lr} outside (0, 1]")));
    }
    let n = labels.len();
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let initial_log_odds = (pos / (n as f64 - pos)).ln();

    let cols = Columns::new(x);
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        max_features: cols.n_features(),
    };
    let mut f = vec![initial_log_odds; n];
    let mut train_loss = vec![mean_log_loss(&f, labels)];
    let mut stages = Vec::with_capacity(params.n_stages);
    let mut residuals = vec![0.0; n];
    let mut hessians = vec![0.0; n];
    let mut step = vec![0.0; n];
    let mut trial = vec![0.0; n];

    for _ in 0..params.n_stages {
        for i in 0..n {
            let p = sigmoid(f[i]);
            residuals[i] = f64::from(labels[i]) - p;
            hessians[i] = p * (1.0 - p);
        }
        let criterion = NewtonCriterion {
            residuals: &residuals,
            hessians: &hessians,
        };
        let mut tree = grow::<_, rand_chacha::ChaCha8Rng>(&cols, &criterion, (0..n).collect(), tree_params, None);
        for (i, s) in step.iter_mut().enumerate() {
            *s = tree.predict_row(x.row(i));
        }

        let prev = *train_loss.last().expect("initial loss");
        let mut scale = 1.0;
        let mut loss = f64::INFINITY;
        for _ in 0..40 {
            for i in 0..n {
                trial[i] = f[i] + lr * scale * step[i];
            }
            loss = mean_log_loss(&trial, labels);
            if loss <= prev {
                break;
            }
            scale *= 0.5;
        }
        if loss > prev {
            scale = 0.0;
            loss = prev;
            trial.copy_from_slice(&f);
        }
        if scale != 1.0 {
            tree.scale_leaves(scale);
        }
        std::mem::swap(&mut f, &mut trial);
        train_loss.push(loss);
        stages.push(tree);
    }

    Ok(GradientBoostingModel {
        initial_log_odds,
        stages,
        learning_rate: lr,
        n_stages: params.n_stages,
        max_depth: params.max_depth,
        train_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Matrix;
    use crate::models::tree::Node;

    #[test]
    fn zero_leaves_give_base_rate() {
        let m = GradientBoostingModel {
            initial_log_odds: (0.25f64 / 0.75).ln(),
            stages: vec![DecisionTree::constant(0.0, 2); 3],
            learning_rate: 0.1,
            n_stages: 3,
            max_depth: 1,
            train_loss: vec![],
        };
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap();
        for p in m.predict_proba(x.view()).unwrap() {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_traced_stump() {
        // x = [1, 2, 3, 4], y = [0, 0, 1, 1]; F0 = 0, p = 0.5, residuals ±0.5,
        // hessians 0.25. The best split is x <= 2.5 with leaves -0.5/0.5 = ∓2.
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]).unwrap();
        let y = [0, 0, 1, 1];
        let m = fit_gbc(
            x.view(),
            &y,
            &BoostingParams {
                n_stages: 1,
                learning_rate: 0.5,
                max_depth: 1,
            },
        )
        .unwrap();
        assert_eq!(m.initial_log_odds, 0.0);
        assert_eq!(
            m.stages[0].nodes(),
            &[
                Node::Split {
                    feature: 0,
                    threshold: 2.5,
                    left: 1,
                    right: 2
                },
                Node::Leaf { value: -2.0 },
                Node::Leaf { value: 2.0 },
            ]
        );
        let p = m.predict_proba(x.view()).unwrap();
        let lo = 1.0 / (1.0 + 1f64.exp());
        let hi = 1.0 / (1.0 + (-1f64).exp());
        assert_eq!(p, vec![lo, lo, hi, hi]);
    }

    #[test]
    fn one_stump_does_not_raise_loss() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![(i * 7 % 13) as f64]).collect();
        let y: Vec<u8> = (0..50).map(|i| u8::from(i % 3 == 0)).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let m = fit_gbc(
            x.view(),
            &y,
            &BoostingParams {
                n_stages: 1,
                learning_rate: 0.7,
                max_depth: 1,
            },
        )
        .unwrap();
        assert_eq!(m.train_loss.len(), 2);
        assert!(m.train_loss[1] <= m.train_loss[0]);
    }

    #[test]
    fn rejects_bad_params() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let y = [0, 1];
        let bad = |p: BoostingParams| fit_gbc(x.view(), &y, &p).is_err();
        assert!(bad(BoostingParams {
            n_stages: 0,
            ..Default::default()
        }));
        assert!(bad(BoostingParams {
            learning_rate: 0.0,
            ..Default::default()
        }));
        assert!(bad(BoostingParams {
            learning_rate: 1.5,
            ..Default::default()
        }));
        assert!(matches!(
            fit_gbc(x.view(), &[1, 1], &BoostingParams::default()),
            Err(Error::DegenerateLabels)
        ));
    }
}
