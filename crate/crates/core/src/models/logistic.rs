use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::MatrixView;
use crate::numeric::CompensatedSum;
use crate::{Error, Result};

use super::{check_training, sigmoid, softplus};

pub const LOGISTIC_GRADIENT_TOL: f64 = 1e-6;
const MAX_NEWTON_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticParams {
    pub l2_lambda: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self { l2_lambda: 1.0 }
    }
}

/// L2-regularised logistic regression. The intercept is not penalised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub l2_lambda: f64,
}

impl LogisticModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn predict_proba(&self, x: MatrixView<'_>) -> Result<Vec<f64>> {
        if x.n_cols() != self.weights.len() {
            return Err(Error::FeatureMismatch {
                expected: self.weights.len(),
                got: x.n_cols(),
            });
        }
        Ok(x.iter_rows().take(x.n_rows()).map(|r| sigmoid(self.decision(r))).collect())
    }
}

/// Objective `Σ log(1 + e^z) − y z + λ/2 ‖w‖²` and its gradient, with the
/// intercept as the last coordinate.
fn objective(x: MatrixView<'_>, labels: &[u8], theta: &DVector<f64>, lambda: f64) -> (f64, DVector<f64>) {
    let d = x.n_cols();
    let mut grad = DVector::zeros(d + 1);
    let mut loss = CompensatedSum::default();
    for (i, row) in x.iter_rows().take(x.n_rows()).enumerate() {
        let z = theta[d] + row.iter().zip(theta.iter()).map(|(a, b)| a * b).sum::<f64>();
        let y = f64::from(labels[i]);
        // softplus(z) - y z without cancellation
        loss.add(if labels[i] == 1 { softplus(-z) } else { softplus(z) });
        let r = sigmoid(z) - y;
        for j in 0..d {
            grad[j] += r * row[j];
        }
        grad[d] += r;
    }
    for j in 0..d {
        loss.add(0.5 * lambda * theta[j] * theta[j]);
        grad[j] += lambda * theta[j];
    }
    (loss.value(), grad)
}

fn hessian(x: MatrixView<'_>, theta: &DVector<f64>, lambda: f64) -> DMatrix<f64> {
    let d = x.n_cols();
    let mut h = DMatrix::zeros(d + 1, d + 1);
    let mut ext = vec![1.0; d + 1];
    for row in x.iter_rows().take(x.n_rows()) {
        let z = theta[d] + row.iter().zip(theta.iter()).map(|(a, b)| a * b).sum::<f64>();
        let p = sigmoid(z);
        let w = p * (1.0 - p);
        ext[..d].copy_from_slice(row);
        for a in 0..=d {
            let wa = w * ext[a];
            for b in a..=d {
                h[(a, b)] += wa * ext[b];
            }
        }
    }
    for a in 0..=d {
        for b in 0..a {
            h[(a, b)] = h[(b, a)];
        }
    }
    for j in 0..d {
        h[(j, j)] += lambda;
    }
    h
}

/// Fit by damped Newton until the gradient norm is at most
/// [`LOGISTIC_GRADIENT_TOL`].
pub fn fit_logistic(x: MatrixView<'_>, labels: &[u8], params: &LogisticParams) -> Result<LogisticModel> {
    check_training(x, labels, 2)?;
    let lambda = params.l2_lambda;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("l2_lambda {lambda} must be non-negative")));
    }
    let d = x.n_cols();
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;

    let mut theta = DVector::zeros(d + 1);
    theta[d] = (pos / (n - pos)).ln();
    let (mut loss, mut grad) = objective(x, labels, &theta, lambda);

    for iter in 0..MAX_NEWTON_ITER {
        let gn = grad.norm();
        if gn <= LOGISTIC_GRADIENT_TOL {
            return Ok(LogisticModel {
                weights: theta.rows(0, d).iter().copied().collect(),
                intercept: theta[d],
                l2_lambda: lambda,
            });
        }
        let mut h = hessian(x, &theta, lambda);
        let ridge = 1e-12 * h.diagonal().max().max(1e-300);
        for j in 0..=d {
            h[(j, j)] += ridge;
        }
        let newton = h.cholesky().map(|c| -c.solve(&grad));
        let steepest = -&grad;

        let mut accepted = None;
        for dir in newton.iter().chain(std::iter::once(&steepest)) {
            let slope = dir.dot(&grad);
            if slope >= 0.0 {
                continue;
            }
            let mut step = 1.0;
            for _ in 0..60 {
                let trial = &theta + dir * step;
                let (l, g) = objective(x, labels, &trial, lambda);
                // inside the rounding band of the objective, require the
                // gradient to shrink
                let band = 64.0 * f64::EPSILON * (1.0 + loss.abs());
                if l < loss - band || (l <= loss + band && g.norm() < gn) {
                    accepted = Some((trial, l, g));
                    break;
                }
                step *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        match accepted {
            Some((t, l, g)) => {
                theta = t;
                loss = l;
                grad = g;
            }
            None => {
                return Err(Error::NoConvergence {
                    what: "logistic regression",
                    iterations: iter,
                    gradient_norm: gn,
                })
            }
        }
    }
    Err(Error::NoConvergence {
        what: "logistic regression",
        iterations: MAX_NEWTON_ITER,
        gradient_norm: grad.norm(),
    })
}

/// Gradient of the fitted objective, for convergence checks.
pub fn logistic_gradient(model: &LogisticModel, x: MatrixView<'_>, labels: &[u8]) -> Vec<f64> {
    let mut theta: Vec<f64> = model.weights.clone();
    theta.push(model.intercept);
    objective(x, labels, &DVector::from_vec(theta), model.l2_lambda)
        .1
        .iter()
        .copied()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Matrix;

    #[test]
    fn zero_features_give_base_rate_intercept() {
        let x = Matrix::from_rows(&vec![vec![0.0, 0.0]; 10]).unwrap();
        let y = [1, 0, 0, 0, 1, 0, 0, 0, 0, 0];
        let m = fit_logistic(x.view(), &y, &LogisticParams::default()).unwrap();
        assert_eq!(m.weights, vec![0.0, 0.0]);
        assert!((m.intercept - (0.2f64 / 0.8).ln()).abs() < 1e-9);
    }

    #[test]
    fn separable_with_penalty_is_finite() {
        let x = Matrix::from_rows(&[vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]]).unwrap();
        let y = [0, 0, 1, 1];
        let m = fit_logistic(x.view(), &y, &LogisticParams { l2_lambda: 1.0 }).unwrap();
        assert!(m.weights[0].is_finite() && m.weights[0] > 0.0);
        let g = logistic_gradient(&m, x.view(), &y);
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() <= LOGISTIC_GRADIENT_TOL);
    }

    #[test]
    fn single_class_rejected() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(
            fit_logistic(x.view(), &[1, 1], &LogisticParams::default()),
            Err(Error::DegenerateLabels)
        ));
    }

    #[test]
    fn feature_mismatch() {
        let m = LogisticModel {
            weights: vec![1.0, 2.0],
            intercept: 0.0,
            l2_lambda: 1.0,
        };
        let x = Matrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(matches!(
            m.predict_proba(x.view()),
            Err(Error::FeatureMismatch { expected: 2, got: 1 })
        ));
    }
}
