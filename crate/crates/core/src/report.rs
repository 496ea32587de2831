//! Versioned report documents: metrics plus the figure series behind them.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibrators::CalibrationKind;
use crate::harness::{experiment_number, CellOutput, GridSummary, PerSplit, Split, SplitMetrics};
use crate::metrics::{self, LabeledScores, ReliabilityBins, RocPoint};
use crate::models::ModelKind;
use crate::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Histogram bins used for score histograms.
pub const HISTOGRAM_BINS: usize = 20;

/// The four-figure view of one set of scores: headline metrics, reliability
/// diagram, score histogram and ROC curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub label: String,
    pub n: usize,
    pub default_rate: f64,
    pub brier: f64,
    pub auroc: Option<f64>,
    pub gini: Option<f64>,
    pub reliability: ReliabilityBins,
    pub histogram: Vec<usize>,
    /// Empty when the scores hold a single class.
    pub roc: Vec<RocPoint>,
}

impl Panel {
    pub fn from_scores(label: impl Into<String>, ls: &LabeledScores, n_bins: usize) -> Result<Self> {
        let (auroc, roc) = if ls.has_both_classes() {
            (Some(metrics::auroc(ls)?), metrics::roc_curve(ls)?.points)
        } else {
            (None, Vec::new())
        };
        Ok(Self {
            label: label.into(),
            n: ls.len(),
            default_rate: ls.default_rate(),
            brier: metrics::brier_score(ls),
            auroc,
            gini: auroc.map(|a| 2.0 * a - 1.0),
            reliability: metrics::reliability_bins(ls, n_bins)?,
            histogram: metrics::score_histogram(ls.scores(), HISTOGRAM_BINS),
            roc,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub experiment: String,
    pub model: ModelKind,
    pub calibration: CalibrationKind,
    pub metrics: PerSplit<SplitMetrics>,
    pub normalized_brier_recent: Option<f64>,
    /// Figures for the recent set.
    pub recent: Panel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub dataset_id: String,
    pub cells: Vec<CellReport>,
}

impl DatasetReport {
    pub fn from_cells(dataset_id: &str, cells: &[CellOutput], recent_labels: &[u8], n_bins: usize) -> Result<Self> {
        let cells = cells
            .iter()
            .map(|c| {
                let ls = LabeledScores::new(c.predictions.recent.clone(), recent_labels.to_vec())?;
                Ok(CellReport {
                    experiment: c.result.experiment.clone(),
                    model: c.result.model,
                    calibration: c.result.calibration,
                    metrics: c.result.metrics.clone(),
                    normalized_brier_recent: c.result.normalized_brier_recent,
                    recent: Panel::from_scores(format!("{} {}", dataset_id, c.result.experiment), &ls, n_bins)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            dataset_id: dataset_id.to_string(),
            cells,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub n_bins: usize,
    pub datasets: Vec<DatasetReport>,
    pub summaries: Vec<GridSummary>,
    /// Datasets that failed, with the error message.
    #[serde(default)]
    pub failures: Vec<(String, String)>,
}

fn check_panel(p: &Panel, n_bins: usize, what: &str) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidInput(format!("{what}: {msg}")));
    if p.reliability.n_bins != n_bins || p.reliability.bins.len() != n_bins {
        return bad(format!("expected {n_bins} reliability bins"));
    }
    if p.reliability.total() != p.n || p.histogram.iter().sum::<usize>() != p.n {
        return bad("bin counts do not add up to n".into());
    }
    if !(0.0..=1.0).contains(&p.brier) {
        return bad(format!("brier {} outside [0, 1]", p.brier));
    }
    match (p.auroc, p.gini) {
        (Some(a), Some(g)) if (g - (2.0 * a - 1.0)).abs() <= 1e-12 && (0.0..=1.0).contains(&a) => {}
        (None, None) => {}
        _ => return bad("gini is not 2 auroc - 1".into()),
    }
    if p.auroc.is_some() && p.roc.is_empty() {
        return bad("missing ROC points".into());
    }
    Ok(())
}

impl Report {
    /// Schema check: version, bin counts, metric identities, and every
    /// summarised cell present in the per-dataset results.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported report schema version {}",
                self.schema_version
            )));
        }
        let mut cells = HashSet::new();
        let mut ids = HashSet::new();
        for d in &self.datasets {
            if !ids.insert(d.dataset_id.as_str()) {
                return Err(Error::InvalidInput(format!("dataset `{}` repeated", d.dataset_id)));
            }
            for c in &d.cells {
                if c.experiment != format!("E{}", experiment_number(c.model, c.calibration)) {
                    return Err(Error::InvalidInput(format!(
                        "{}: cell {} does not match ({}, {})",
                        d.dataset_id, c.experiment, c.model, c.calibration
                    )));
                }
                if !cells.insert((d.dataset_id.as_str(), c.experiment.as_str())) {
                    return Err(Error::InvalidInput(format!("{}: cell {} repeated", d.dataset_id, c.experiment)));
                }
                for split in Split::ALL {
                    let m = c.metrics.get(split);
                    if let (Some(a), Some(g)) = (m.auroc, m.gini) {
                        if (g - (2.0 * a - 1.0)).abs() > 1e-12 {
                            return Err(Error::InvalidInput(format!(
                                "{} {}: gini is not 2 auroc - 1",
                                d.dataset_id, c.experiment
                            )));
                        }
                    }
                }
                check_panel(&c.recent, self.n_bins, &format!("{} {}", d.dataset_id, c.experiment))?;
            }
        }
        let present: HashSet<&str> = cells.iter().map(|(_, e)| *e).collect();
        for s in &self.summaries {
            for c in &s.cells {
                if !present.contains(c.experiment.as_str()) {
                    return Err(Error::InvalidInput(format!(
                        "summary references missing cell {}",
                        c.experiment
                    )));
                }
                let f = c.summary;
                if !(f.min <= f.q1 && f.q1 <= f.median && f.median <= f.q3 && f.q3 <= f.max) {
                    return Err(Error::InvalidInput(format!("{}: unordered five-number summary", c.experiment)));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        r.validate()?;
        Ok(r)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Original scores against the same scores halved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDemoReport {
    pub schema_version: u32,
    pub n: usize,
    pub seed: u64,
    pub original: Panel,
    pub halved: Panel,
}

impl RankDemoReport {
    /// Builds the report and checks that AUROC is unchanged and Brier rises.
    pub fn build(n: usize, seed: u64, n_bins: usize) -> Result<Self> {
        let original = crate::dataset::make_rank_demo_scores(n, seed)?;
        let halved = original.map_scores(|p| p / 2.0)?;
        let report = Self {
            schema_version: REPORT_SCHEMA_VERSION,
            n,
            seed,
            original: Panel::from_scores("original", &original, n_bins)?,
            halved: Panel::from_scores("halved", &halved, n_bins)?,
        };
        if report.original.auroc != report.halved.auroc {
            return Err(Error::InvalidInput(format!(
                "halving changed AUROC: {:?} vs {:?}",
                report.original.auroc, report.halved.auroc
            )));
        }
        if report.halved.brier <= report.original.brier {
            return Err(Error::InvalidInput(format!(
                "halving did not raise Brier: {} vs {}",
                report.original.brier, report.halved.brier
            )));
        }
        Ok(report)
    }
}
