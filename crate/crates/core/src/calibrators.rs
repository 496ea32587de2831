//! Monotone recalibration maps from model score to probability.
//!
//! [`Calibrator::Identity`] is the uncalibrated control, [`SigmoidCalibrator`]
//! is Platt scaling and [`IsotonicCalibrator`] is the pool-adjacent-violators
//! least-squares fit.

use serde::{Deserialize, Serialize};

use crate::numeric::CompensatedSum;
use crate::{Error, Result};

pub const SIGMOID_GRADIENT_TOL: f64 = 1e-8;
pub const SIGMOID_MAX_ITER: usize = 10_000;

/// Relative rounding band of a summed log-likelihood.
const OBJECTIVE_NOISE: f64 = 64.0 * f64::EPSILON;

/// `P(y = 1 | f) = 1 / (1 + exp(a·f + b))`. A negative `a` makes the map increasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidCalibrator {
    pub a: f64,
    pub b: f64,
}

/// Diagnostics of a Platt fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidFit {
    pub calibrator: SigmoidCalibrator,
    pub gradient_norm: f64,
    pub iterations: usize,
}

impl SigmoidCalibrator {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidInput("sigmoid parameters must be finite".into()));
        }
        Ok(Self { a, b })
    }

    pub fn apply_one(&self, f: f64) -> f64 {
        // σ(-z) without overflow
        let z = self.a * f + self.b;
        if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }

    pub fn apply(&self, scores: &[f64]) -> Vec<f64> {
        scores.iter().map(|&f| self.apply_one(f)).collect()
    }
}

/// Piecewise-linear non-decreasing map through `(thresholds[i], values[i])`,
/// constant beyond the first and last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IsotonicKnots")]
pub struct IsotonicCalibrator {
    thresholds: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct IsotonicKnots {
    thresholds: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<IsotonicKnots> for IsotonicCalibrator {
    type Error = Error;

    fn try_from(k: IsotonicKnots) -> Result<Self> {
        Self::new(k.thresholds, k.values)
    }
}

impl IsotonicCalibrator {
    pub fn new(thresholds: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if thresholds.len() != values.len() || thresholds.is_empty() {
            return Err(Error::InvalidInput(
                "isotonic knots need equal, non-zero lengths".into(),
            ));
        }
        if thresholds.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("isotonic knots must be finite".into()));
        }
        if thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "isotonic thresholds must be strictly increasing".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("isotonic values must be non-decreasing".into()));
        }
        Ok(Self { thresholds, values })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn apply_one(&self, f: f64) -> f64 {
        let x = &self.thresholds;
        let y = &self.values;
        let last = x.len() - 1;
        if f <= x[0] {
            return y[0];
        }
        if f >= x[last] {
            return y[last];
        }
        // first knot strictly greater than f; 1 <= hi <= last here
        let hi = x.partition_point(|&t| t <= f);
        let lo = hi - 1;
        if x[lo] == f {
            return y[lo];
        }
        let w = (f - x[lo]) / (x[hi] - x[lo]);
        y[lo] + w * (y[hi] - y[lo])
    }

    pub fn apply(&self, scores: &[f64]) -> Vec<f64> {
        scores.iter().map(|&f| self.apply_one(f)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationKind {
    None,
    Sigmoid,
    Isotonic,
}

impl CalibrationKind {
    pub const ALL: [CalibrationKind; 3] = [Self::None, Self::Sigmoid, Self::Isotonic];

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Sigmoid => "sigmoid",
            Self::Isotonic => "isotonic",
        }
    }
}

impl std::fmt::Display for CalibrationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CalibrationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "identity" => Ok(Self::None),
            "sigmoid" | "platt" => Ok(Self::Sigmoid),
            "isotonic" => Ok(Self::Isotonic),
            other => Err(Error::InvalidInput(format!("unknown calibration `{other}`"))),
        }
    }
}

/// A fitted calibrator. Serialises as `{"type": "sigmoid", "a": .., "b": ..}`,
/// `{"type": "isotonic", "thresholds": [..], "values": [..]}` or
/// `{"type": "identity"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Calibrator {
    Identity,
    Sigmoid(SigmoidCalibrator),
    Isotonic(IsotonicCalibrator),
}

impl Calibrator {
    /// Fit the calibrator of the given kind on (score, label) pairs.
    pub fn fit(kind: CalibrationKind, scores: &[f64], labels: &[u8]) -> Result<Self> {
        Ok(match kind {
            CalibrationKind::None => Self::Identity,
            CalibrationKind::Sigmoid => Self::Sigmoid(fit_sigmoid(scores, labels)?),
            CalibrationKind::Isotonic => Self::Isotonic(fit_isotonic(scores, labels)?),
        })
    }

    pub fn kind(&self) -> CalibrationKind {
        match self {
            Self::Identity => CalibrationKind::None,
            Self::Sigmoid(_) => CalibrationKind::Sigmoid,
            Self::Isotonic(_) => CalibrationKind::Isotonic,
        }
    }

    pub fn apply_one(&self, f: f64) -> f64 {
        match self {
            Self::Identity => f.clamp(0.0, 1.0),
            Self::Sigmoid(s) => s.apply_one(f),
            Self::Isotonic(iso) => iso.apply_one(f),
        }
    }

    pub fn apply(&self, scores: &[f64]) -> Vec<f64> {
        scores.iter().map(|&f| self.apply_one(f)).collect()
    }
}

fn check_labels(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("scores must be finite".into()));
    }
    if let Some(i) = labels.iter().position(|&y| y > 1) {
        return Err(Error::InvalidLabel {
            row: i,
            value: labels[i].to_string(),
        });
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Platt's smoothed targets `(N₊+1)/(N₊+2)` and `1/(N₋+2)`.
pub fn platt_targets(labels: &[u8]) -> Vec<f64> {
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    let hi = (pos + 1.0) / (pos + 2.0);
    let lo = 1.0 / (neg + 2.0);
    labels.iter().map(|&y| if y == 1 { hi } else { lo }).collect()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Negative log-likelihood of `(a, b)` against smoothed targets.
pub fn platt_nll(a: f64, b: f64, scores: &[f64], targets: &[f64]) -> f64 {
    scores
        .iter()
        .zip(targets)
        .map(|(&f, &t)| {
            let z = a * f + b;
            t * softplus(z) + (1.0 - t) * softplus(-z)
        })
        .sum::<CompensatedSum>()
        .value()
}

/// Gradient of [`platt_nll`] with respect to `(a, b)`.
pub fn platt_gradient(a: f64, b: f64, scores: &[f64], targets: &[f64]) -> [f64; 2] {
    let s = SigmoidCalibrator { a, b };
    let mut g = [0.0; 2];
    for (&f, &t) in scores.iter().zip(targets) {
        let r = t - s.apply_one(f);
        g[0] += r * f;
        g[1] += r;
    }
    g
}

fn platt_hessian(c: &SigmoidCalibrator, scores: &[f64]) -> [f64; 3] {
    let mut h = [0.0; 3];
    for &f in scores {
        let p = c.apply_one(f);
        let w = p * (1.0 - p);
        h[0] += w * f * f;
        h[1] += w * f;
        h[2] += w;
    }
    h
}

fn norm2(g: [f64; 2]) -> f64 {
    g[0].hypot(g[1])
}

pub fn fit_sigmoid(scores: &[f64], labels: &[u8]) -> Result<SigmoidCalibrator> {
    fit_sigmoid_report(scores, labels).map(|r| r.calibrator)
}

/// Maximum-likelihood Platt fit by damped Newton with a gradient-descent
/// fallback. Converged when the gradient norm is at most
/// [`SIGMOID_GRADIENT_TOL`].
pub fn fit_sigmoid_report(scores: &[f64], labels: &[u8]) -> Result<SigmoidFit> {
    let (pos, neg) = check_labels(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let targets = platt_targets(labels);

    // constant scores carry no rank information: pin a = 0
    if scores.iter().all(|&f| f == scores[0]) {
        let t = targets.iter().sum::<f64>() / targets.len() as f64;
        let b = ((1.0 - t) / t).ln();
        let gradient_norm = norm2(platt_gradient(0.0, b, scores, &targets));
        return Ok(SigmoidFit {
            calibrator: SigmoidCalibrator { a: 0.0, b },
            gradient_norm,
            iterations: 0,
        });
    }

    let mut c = SigmoidCalibrator {
        a: 0.0,
        b: ((neg as f64 + 1.0) / (pos as f64 + 1.0)).ln(),
    };
    let mut f_cur = platt_nll(c.a, c.b, scores, &targets);
    let mut g = platt_gradient(c.a, c.b, scores, &targets);
    for iter in 0..SIGMOID_MAX_ITER {
        let gn = norm2(g);
        if gn <= SIGMOID_GRADIENT_TOL {
            return Ok(SigmoidFit {
                calibrator: c,
                gradient_norm: gn,
                iterations: iter,
            });
        }
        let h = platt_hessian(&c, scores);
        // tiny ridge keeps the 2x2 solve defined when p(1-p) underflows
        let ridge = 1e-12 * (h[0] + h[2]).max(1e-300);
        let (h00, h01, h11) = (h[0] + ridge, h[1], h[2] + ridge);
        let det = h00 * h11 - h01 * h01;
        let newton = (det > 0.0).then(|| {
            [
                -(h11 * g[0] - h01 * g[1]) / det,
                -(h00 * g[1] - h01 * g[0]) / det,
            ]
        });
        let steepest = [-g[0], -g[1]];

        let mut accepted = None;
        for dir in newton.iter().chain(std::iter::once(&steepest)) {
            if dir[0] * g[0] + dir[1] * g[1] >= 0.0 {
                continue;
            }
            let mut step = 1.0;
            for _ in 0..60 {
                let trial = SigmoidCalibrator {
                    a: c.a + step * dir[0],
                    b: c.b + step * dir[1],
                };
                let f_trial = platt_nll(trial.a, trial.b, scores, &targets);
                // inside the rounding band of the objective a lower value
                // means nothing; require the gradient to shrink instead
                let band = OBJECTIVE_NOISE * (1.0 + f_cur.abs());
                if f_trial < f_cur - band {
                    accepted = Some((trial, f_trial));
                    break;
                }
                if f_trial <= f_cur + band {
                    let g_trial = platt_gradient(trial.a, trial.b, scores, &targets);
                    if norm2(g_trial) < gn {
                        accepted = Some((trial, f_trial));
                        break;
                    }
                }
                step *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        match accepted {
            Some((trial, f_trial)) => {
                c = trial;
                f_cur = f_trial;
                g = platt_gradient(c.a, c.b, scores, &targets);
            }
            None => {
                return Err(Error::NoConvergence {
                    what: "sigmoid calibration",
                    iterations: iter,
                    gradient_norm: gn,
                })
            }
        }
    }
    let gn = norm2(g);
    if gn <= SIGMOID_GRADIENT_TOL {
        return Ok(SigmoidFit {
            calibrator: c,
            gradient_norm: gn,
            iterations: SIGMOID_MAX_ITER,
        });
    }
    Err(Error::NoConvergence {
        what: "sigmoid calibration",
        iterations: SIGMOID_MAX_ITER,
        gradient_norm: gn,
    })
}

/// Weighted least-squares non-decreasing fit of `targets` against `x`.
///
/// Points with equal `x` are merged into one weighted point first, then
/// adjacent violators are pooled. Returns the knots of the fitted step
/// function: each pooled block contributes its smallest and largest `x`.
pub fn isotonic_regression(x: &[f64], targets: &[f64], weights: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != targets.len() || x.len() != weights.len() {
        return Err(Error::InvalidInput("isotonic inputs differ in length".into()));
    }
    if x.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("isotonic inputs must be finite".into()));
    }
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidInput("isotonic weights must be positive".into()));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));

    struct Block {
        x_first: f64,
        x_last: f64,
        sum_wy: f64,
        sum_w: f64,
    }
    impl Block {
        fn mean(&self) -> f64 {
            self.sum_wy / self.sum_w
        }
    }

    let mut blocks: Vec<Block> = Vec::with_capacity(x.len());
    let mut k = 0;
    while k < order.len() {
        let xv = x[order[k]];
        let mut b = Block {
            x_first: xv,
            x_last: xv,
            sum_wy: 0.0,
            sum_w: 0.0,
        };
        while k < order.len() && x[order[k]] == xv {
            let i = order[k];
            b.sum_wy += weights[i] * targets[i];
            b.sum_w += weights[i];
            k += 1;
        }
        blocks.push(b);
        while blocks.len() >= 2 {
            let n = blocks.len();
            if blocks[n - 2].mean() <= blocks[n - 1].mean() {
                break;
            }
            let last = blocks.pop().expect("two blocks");
            let prev = blocks.last_mut().expect("two blocks");
            prev.x_last = last.x_last;
            prev.sum_wy += last.sum_wy;
            prev.sum_w += last.sum_w;
        }
    }

    let mut knots = Vec::with_capacity(2 * blocks.len());
    let mut values = Vec::with_capacity(2 * blocks.len());
    let mut prev_value = f64::NEG_INFINITY;
    for b in &blocks {
        // pooled means are non-decreasing mathematically; guard rounding
        let m = b.mean().max(prev_value);
        prev_value = m;
        knots.push(b.x_first);
        values.push(m);
        if b.x_last > b.x_first {
            knots.push(b.x_last);
            values.push(m);
        }
    }
    Ok((knots, values))
}

pub fn fit_isotonic(scores: &[f64], labels: &[u8]) -> Result<IsotonicCalibrator> {
    check_labels(scores, labels)?;
    if scores.len() < 2 {
        return Err(Error::TooSmall {
            rows: scores.len(),
            min: 2,
        });
    }
    let targets: Vec<f64> = labels.iter().map(|&y| f64::from(y)).collect();
    let weights = vec![1.0; scores.len()];
    let (thresholds, values) = isotonic_regression(scores, &targets, &weights)?;
    IsotonicCalibrator::new(thresholds, values)
}
