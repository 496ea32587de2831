//! Calibration and discrimination metrics.
//!
//! Everything here operates on [`LabeledScores`]: predicted default
//! probabilities paired with observed 0/1 outcomes.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Predicted probabilities with their observed binary outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScores {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.is_empty() {
            return Err(Error::InvalidInput("no observations".into()));
        }
        if let Some(i) = scores.iter().position(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidInput(format!(
                "score {} at index {i} outside [0, 1]",
                scores[i]
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::InvalidLabel {
                row: i,
                value: labels[i].to_string(),
            });
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn default_rate(&self) -> f64 {
        self.n_positive() as f64 / self.len() as f64
    }

    /// Same labels, scores passed through `f`.
    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.scores.iter().map(|&s| f(s)).collect(), self.labels.clone())
    }

    /// Whether both classes are present, i.e. AUROC is defined.
    pub fn has_both_classes(&self) -> bool {
        let pos = self.n_positive();
        pos > 0 && pos < self.len()
    }
}

/// One rating grade: a common assigned PD, its observed default rate and size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grade {
    pub pd_assigned: f64,
    pub observed_rate: f64,
    pub count: usize,
}

/// Obligors pooled into rating grades.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradePool {
    grades: Vec<Grade>,
}

impl GradePool {
    pub fn new(grades: Vec<Grade>) -> Result<Self> {
        if grades.is_empty() {
            return Err(Error::InvalidInput("grade pool has no grades".into()));
        }
        for (k, g) in grades.iter().enumerate() {
            if !(0.0..=1.0).contains(&g.pd_assigned) || !(0.0..=1.0).contains(&g.observed_rate) {
                return Err(Error::InvalidInput(format!(
                    "grade {k}: PD and observed rate must lie in [0, 1]"
                )));
            }
            if g.count == 0 {
                return Err(Error::InvalidInput(format!("grade {k} is empty")));
            }
        }
        Ok(Self { grades })
    }

    /// One grade per observation, with the observed rate equal to the label.
    pub fn singletons(ls: &LabeledScores) -> Self {
        let grades = ls
            .scores()
            .iter()
            .zip(ls.labels())
            .map(|(&pd, &y)| Grade {
                pd_assigned: pd,
                observed_rate: f64::from(y),
                count: 1,
            })
            .collect();
        Self { grades }
    }

    pub fn grades(&self) -> &[Grade] {
        &self.grades
    }

    pub fn total(&self) -> usize {
        self.grades.iter().map(|g| g.count).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve from (0, 0) to (1, 1), false positive rate on the horizontal axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Trapezoidal area under the plotted points.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum()
    }
}

/// One equal-width bin of a reliability diagram. Empty bins have `count == 0`
/// and no mean or rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_predicted: Option<f64>,
    pub observed_rate: Option<f64>,
}

impl ReliabilityBin {
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    pub n_bins: usize,
    pub bins: Vec<ReliabilityBin>,
}

impl ReliabilityBins {
    pub fn occupied(&self) -> impl Iterator<Item = &ReliabilityBin> {
        self.bins.iter().filter(|b| !b.is_empty())
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

/// Mean squared difference between predicted probability and outcome.
pub fn brier_score(ls: &LabeledScores) -> f64 {
    let sum: f64 = ls
        .scores()
        .iter()
        .zip(ls.labels())
        .map(|(&p, &y)| {
            let d = p - f64::from(y);
            d * d
        })
        .sum();
    sum / ls.len() as f64
}

/// Brier score over rating grades:
/// `(1/N) Σ_k N_k [p_k (1 − PD_k)² + (1 − p_k) PD_k²]`.
pub fn brier_score_pooled(pool: &GradePool) -> f64 {
    let sum: f64 = pool
        .grades()
        .iter()
        .map(|g| {
            let pd = g.pd_assigned;
            let p = g.observed_rate;
            g.count as f64 * (p * (1.0 - pd) * (1.0 - pd) + (1.0 - p) * pd * pd)
        })
        .sum();
    sum / pool.total() as f64
}

/// Cumulative counts plus the class totals `(n_pos, n_neg)`.
type RocCounts = (Vec<(u64, u64)>, u64, u64);

/// Cumulative (false positive, true positive) counts, one entry per distinct
/// score, sweeping the threshold from above the maximum downwards. Starts at
/// (0, 0) and ends at (n_neg, n_pos).
fn roc_counts(ls: &LabeledScores) -> Result<RocCounts> {
    let n_pos = ls.n_positive() as u64;
    let n_neg = ls.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..ls.len()).collect();
    let scores = ls.scores();
    let labels = ls.labels();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut counts = Vec::with_capacity(order.len() + 1);
    counts.push((0, 0));
    let (mut fp, mut tp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        counts.push((fp, tp));
    }
    Ok((counts, n_pos, n_neg))
}

/// ROC curve with tied scores merged into a single threshold.
pub fn roc_curve(ls: &LabeledScores) -> Result<RocCurve> {
    let (counts, n_pos, n_neg) = roc_counts(ls)?;
    let points = counts
        .into_iter()
        .map(|(fp, tp)| RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        })
        .collect();
    Ok(RocCurve { points })
}

/// Area under the ROC curve by trapezoidal integration.
///
/// The area is accumulated in integer counts and divided once, so the result
/// only depends on the ordering of the scores and the tie structure. Any
/// strictly increasing transform of the scores yields a bit-identical value.
pub fn auroc(ls: &LabeledScores) -> Result<f64> {
    let (counts, n_pos, n_neg) = roc_counts(ls)?;
    // twice the trapezoid area, in units of one (negative, positive) pair
    let twice_area: u128 = counts
        .windows(2)
        .map(|w| u128::from(w[1].0 - w[0].0) * u128::from(w[1].1 + w[0].1))
        .sum();
    Ok(twice_area as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// `2·AUROC − 1`. Negative values mean the ranking is better when reversed.
pub fn gini(ls: &LabeledScores) -> Result<f64> {
    Ok(2.0 * auroc(ls)? - 1.0)
}

fn bin_index(score: f64, n_bins: usize) -> usize {
    ((score * n_bins as f64) as usize).min(n_bins - 1)
}

/// Equal-width reliability bins over [0, 1]. The top bin is closed on the right.
pub fn reliability_bins(ls: &LabeledScores, n_bins: usize) -> Result<ReliabilityBins> {
    if n_bins < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 reliability bins, got {n_bins}"
        )));
    }
    let mut sum_pred = vec![0.0; n_bins];
    let mut sum_pos = vec![0usize; n_bins];
    let mut count = vec![0usize; n_bins];
    for (&p, &y) in ls.scores().iter().zip(ls.labels()) {
        let b = bin_index(p, n_bins);
        sum_pred[b] += p;
        sum_pos[b] += usize::from(y);
        count[b] += 1;
    }
    let width = 1.0 / n_bins as f64;
    let bins = (0..n_bins)
        .map(|b| {
            let n = count[b];
            ReliabilityBin {
                lower: b as f64 * width,
                upper: (b + 1) as f64 * width,
                count: n,
                mean_predicted: (n > 0).then(|| sum_pred[b] / n as f64),
                observed_rate: (n > 0).then(|| sum_pos[b] as f64 / n as f64),
            }
        })
        .collect();
    Ok(ReliabilityBins { n_bins, bins })
}

/// Equal-width histogram counts of scores over [0, 1].
pub fn score_histogram(scores: &[f64], n_bins: usize) -> Vec<usize> {
    let mut counts = vec![0; n_bins.max(1)];
    let n = counts.len();
    for &s in scores {
        counts[bin_index(s.clamp(0.0, 1.0), n)] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ls(scores: &[f64], labels: &[u8]) -> LabeledScores {
        LabeledScores::new(scores.to_vec(), labels.to_vec()).unwrap()
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(LabeledScores::new(vec![0.5], vec![]).is_err());
        assert!(LabeledScores::new(vec![], vec![]).is_err());
        assert!(LabeledScores::new(vec![1.5], vec![1]).is_err());
        assert!(LabeledScores::new(vec![f64::NAN], vec![1]).is_err());
        assert!(matches!(
            LabeledScores::new(vec![0.5, 0.5], vec![0, 2]),
            Err(Error::InvalidLabel { row: 1, .. })
        ));
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier_score(&ls(&[1.0, 0.0, 1.0], &[1, 0, 1])), 0.0);
        assert_eq!(brier_score(&ls(&[0.5, 0.5], &[0, 1])), 0.25);
        let b = brier_score(&ls(&[0.8, 0.4, 0.9, 0.1], &[1, 0, 1, 0]));
        assert!((b - 0.055).abs() < 1e-15);
    }

    #[test]
    fn pooled_brier_examples() {
        let one = |pd, p, count| {
            GradePool::new(vec![Grade {
                pd_assigned: pd,
                observed_rate: p,
                count,
            }])
            .unwrap()
        };
        assert!((brier_score_pooled(&one(0.2, 0.2, 10)) - 0.16).abs() < 1e-15);
        assert_eq!(brier_score_pooled(&one(0.0, 0.0, 5)), 0.0);

        let x = ls(&[0.8, 0.4, 0.9, 0.1], &[1, 0, 1, 0]);
        let pooled = brier_score_pooled(&GradePool::singletons(&x));
        assert!((pooled - 0.055).abs() < 1e-15);
        assert!((pooled - brier_score(&x)).abs() < 1e-12);
    }

    #[test]
    fn grade_pool_validation() {
        assert!(GradePool::new(vec![]).is_err());
        let bad = Grade {
            pd_assigned: 0.1,
            observed_rate: 0.1,
            count: 0,
        };
        assert!(GradePool::new(vec![bad]).is_err());
    }

    #[test]
    fn roc_examples() {
        let pts = |c: RocCurve| c.points.iter().map(|p| (p.fpr, p.tpr)).collect::<Vec<_>>();
        assert_eq!(
            pts(roc_curve(&ls(&[0.1, 0.9], &[0, 1])).unwrap()),
            vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
        );
        assert_eq!(
            pts(roc_curve(&ls(&[0.9, 0.1], &[0, 1])).unwrap()),
            vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]
        );
        assert_eq!(
            pts(roc_curve(&ls(&[0.5, 0.5], &[0, 1])).unwrap()),
            vec![(0.0, 0.0), (1.0, 1.0)]
        );
    }

    #[test]
    fn degenerate_labels_error() {
        let all_pos = ls(&[0.2, 0.7], &[1, 1]);
        assert!(matches!(roc_curve(&all_pos), Err(Error::DegenerateLabels)));
        assert!(matches!(auroc(&all_pos), Err(Error::DegenerateLabels)));
        assert!(matches!(gini(&ls(&[0.2], &[0])), Err(Error::DegenerateLabels)));
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&ls(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1])).unwrap(), 1.0);
        assert_eq!(auroc(&ls(&[0.4, 0.4, 0.6], &[0, 1, 1])).unwrap(), 0.75);
        assert_eq!(gini(&ls(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1])).unwrap(), 1.0);
    }

    #[test]
    fn gini_conversion_table() {
        // 2 positives x 5 negatives; 0.5 outranks 4 negatives, 0.7 all 5 -> 9/10
        let x = ls(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7], &[0, 0, 0, 0, 1, 0, 1]);
        assert!((auroc(&x).unwrap() - 0.9).abs() < 1e-15);
        assert!((gini(&x).unwrap() - 0.8).abs() < 1e-15);

        // 0.3 outranks 2 negatives, 0.7 all 5 -> 7/10
        let x = ls(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7], &[0, 0, 1, 0, 0, 0, 1]);
        assert!((auroc(&x).unwrap() - 0.7).abs() < 1e-15);
        assert!((gini(&x).unwrap() - 0.4).abs() < 1e-15);

        let chance = ls(&[0.5, 0.5, 0.5, 0.5], &[0, 1, 0, 1]);
        assert_eq!(auroc(&chance).unwrap(), 0.5);
        assert_eq!(gini(&chance).unwrap(), 0.0);
    }

    #[test]
    fn reliability_examples() {
        let r = reliability_bins(&ls(&[0.05, 0.95], &[0, 1]), 10).unwrap();
        assert_eq!(r.bins.len(), 10);
        assert_eq!(r.bins[0].count, 1);
        assert_eq!(r.bins[0].mean_predicted, Some(0.05));
        assert_eq!(r.bins[0].observed_rate, Some(0.0));
        assert_eq!(r.bins[9].mean_predicted, Some(0.95));
        assert_eq!(r.bins[9].observed_rate, Some(1.0));
        assert_eq!(r.occupied().count(), 2);
        assert!(r.bins[1..9].iter().all(|b| b.is_empty() && b.mean_predicted.is_none()));

        let r = reliability_bins(&ls(&[0.5; 5], &[1, 0, 0, 1, 1]), 10).unwrap();
        let occupied: Vec<_> = r.occupied().collect();
        assert_eq!(occupied.len(), 1);
        assert_eq!(occupied[0].observed_rate, Some(0.6));
        assert_eq!(r.total(), 5);

        // score 1.0 lands in the last bin
        let r = reliability_bins(&ls(&[1.0, 0.0], &[1, 0]), 4).unwrap();
        assert_eq!(r.bins[3].count, 1);
        assert_eq!(r.bins[0].count, 1);

        assert!(reliability_bins(&ls(&[0.5], &[1]), 1).is_err());
    }

    #[test]
    fn histogram_counts() {
        assert_eq!(score_histogram(&[0.0, 0.05, 0.5, 1.0], 4), vec![2, 0, 1, 1]);
    }
}
