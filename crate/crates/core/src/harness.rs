//! Benchmark protocol: the model × calibrator grid on chronological splits.
//!
//! For one dataset and one grid cell the steps are:
//!
//! 1. split rows 60/20/20 in time order into train, calibration and recent;
//! 2. fit the model on the train rows;
//! 3. predict raw probabilities on all three sets;
//! 4. for a calibrated cell, fit the calibrator on the calibration-set
//!    predictions and labels, then re-predict calibration and recent;
//! 5. score every set. Train metrics always use the raw model output.
//!
//! [`run_grid`] fits each model family once and calibrates it three ways,
//! giving cells E1–E9 (columns logit/rf/gbc, rows none/sigmoid/isotonic).

use std::io::{BufRead, Write};
use std::ops::Range;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrators::{CalibrationKind, Calibrator};
use crate::dataset::{chronological_split, SplitIndices, TimeOrderedDataset};
use crate::metrics::{self, LabeledScores};
use crate::models::{ModelConfig, ModelKind, Scorer};
use crate::{Error, Result};

pub const RESULT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Calibration,
    Recent,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Calibration, Split::Recent];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Calibration => "calibration",
            Split::Recent => "recent",
        }
    }

    pub fn range(self, s: &SplitIndices) -> Range<usize> {
        match self {
            Split::Train => s.train.clone(),
            Split::Calibration => s.calibration.clone(),
            Split::Recent => s.recent.clone(),
        }
    }
}

/// One value per chronological split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerSplit<T> {
    pub train: T,
    pub calibration: T,
    pub recent: T,
}

impl<T> PerSplit<T> {
    pub fn get(&self, split: Split) -> &T {
        match split {
            Split::Train => &self.train,
            Split::Calibration => &self.calibration,
            Split::Recent => &self.recent,
        }
    }
}

/// Grid position `E1`–`E9`: model varies fastest, then calibration.
pub fn experiment_number(model: ModelKind, calibration: CalibrationKind) -> usize {
    let m = ModelKind::ALL.iter().position(|&k| k == model).expect("model kind");
    let c = CalibrationKind::ALL
        .iter()
        .position(|&k| k == calibration)
        .expect("calibration kind");
    3 * c + m + 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset_id: String,
    pub model_kind: ModelKind,
    pub calibration_kind: CalibrationKind,
    pub models: ModelConfig,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn experiment_id(&self) -> String {
        format!("E{}", experiment_number(self.model_kind, self.calibration_kind))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub n: usize,
    pub default_rate: f64,
    pub brier: f64,
    /// Missing when the set holds a single class.
    pub auroc: Option<f64>,
    pub gini: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub dataset_id: String,
    pub experiment: String,
    pub model: ModelKind,
    pub calibration: CalibrationKind,
    pub seed: u64,
    pub metrics: PerSplit<SplitMetrics>,
    /// Recent-set Brier divided by the raw logistic (E1) recent-set Brier.
    pub normalized_brier_recent: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ExperimentResult {
    pub fn experiment_number(&self) -> usize {
        experiment_number(self.model, self.calibration)
    }
}

/// Final probabilities of one cell on each split (raw on train).
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutput {
    pub result: ExperimentResult,
    pub predictions: PerSplit<Vec<f64>>,
}

/// Instrumentation hook for protocol checks. All methods default to no-ops.
pub trait ProtocolObserver: Sync {
    fn model_fitted(&self, _dataset_id: &str, _model: ModelKind, _rows: Range<usize>) {}

    fn calibrator_fitted(
        &self,
        _dataset_id: &str,
        _model: ModelKind,
        _kind: CalibrationKind,
        _rows: Range<usize>,
    ) {
    }

    fn raw_predictions(&self, _dataset_id: &str, _model: ModelKind, _split: Split, _probs: &[f64]) {}
}

pub struct NoopObserver;

impl ProtocolObserver for NoopObserver {}

fn split_metrics(scores: &[f64], labels: &[u8], split: Split, warnings: &mut Vec<String>) -> Result<SplitMetrics> {
    let ls = LabeledScores::new(scores.to_vec(), labels.to_vec())?;
    let (auroc, gini) = if ls.has_both_classes() {
        let a = metrics::auroc(&ls)?;
        (Some(a), Some(2.0 * a - 1.0))
    } else {
        let msg = format!("{} set has a single class; AUROC and Gini missing", split.name());
        warn!("{msg}");
        warnings.push(msg);
        (None, None)
    };
    Ok(SplitMetrics {
        n: ls.len(),
        default_rate: ls.default_rate(),
        brier: metrics::brier_score(&ls),
        auroc,
        gini,
    })
}

/// Fit one model family and evaluate it under each requested calibration.
fn run_model_cells(
    dataset_id: &str,
    ds: &TimeOrderedDataset,
    splits: &SplitIndices,
    model_kind: ModelKind,
    calibrations: &[CalibrationKind],
    models: &ModelConfig,
    seed: u64,
    observer: &dyn ProtocolObserver,
) -> Result<Vec<CellOutput>> {
    let (x_train, y_train) = ds.slice(splits.train.clone());
    let model = Scorer::fit(model_kind, x_train, y_train, models, seed)?;
    observer.model_fitted(dataset_id, model_kind, splits.train.clone());

    let mut raw = Vec::with_capacity(3);
    for split in Split::ALL {
        let (x, _) = ds.slice(split.range(splits));
        let p = model.predict_proba(x)?;
        observer.raw_predictions(dataset_id, model_kind, split, &p);
        raw.push(p);
    }
    let raw = PerSplit {
        recent: raw.pop().expect("recent"),
        calibration: raw.pop().expect("calibration"),
        train: raw.pop().expect("train"),
    };

    let label_of = |split: Split| &ds.labels()[split.range(splits)];
    let mut out = Vec::with_capacity(calibrations.len());
    for &kind in calibrations {
        let calibrator = {
            let rows = splits.calibration.clone();
            let calibrator = Calibrator::fit(kind, &raw.calibration, &ds.labels()[rows.clone()])?;
            if kind != CalibrationKind::None {
                observer.calibrator_fitted(dataset_id, model_kind, kind, rows);
            }
            calibrator
        };
        let predictions = PerSplit {
            train: raw.train.clone(),
            calibration: calibrator.apply(&raw.calibration),
            recent: calibrator.apply(&raw.recent),
        };
        let mut warnings = Vec::new();
        let metrics = PerSplit {
            train: split_metrics(&predictions.train, label_of(Split::Train), Split::Train, &mut warnings)?,
            calibration: split_metrics(
                &predictions.calibration,
                label_of(Split::Calibration),
                Split::Calibration,
                &mut warnings,
            )?,
            recent: split_metrics(&predictions.recent, label_of(Split::Recent), Split::Recent, &mut warnings)?,
        };
        out.push(CellOutput {
            result: ExperimentResult {
                schema_version: RESULT_SCHEMA_VERSION,
                dataset_id: dataset_id.to_string(),
                experiment: format!("E{}", experiment_number(model_kind, kind)),
                model: model_kind,
                calibration: kind,
                seed,
                metrics,
                normalized_brier_recent: None,
                warnings,
            },
            predictions,
        });
    }
    Ok(out)
}

/// Run a single grid cell on a dataset.
pub fn run_experiment(spec: &ExperimentSpec, ds: &TimeOrderedDataset) -> Result<ExperimentResult> {
    run_experiment_observed(spec, ds, &NoopObserver)
}

pub fn run_experiment_observed(
    spec: &ExperimentSpec,
    ds: &TimeOrderedDataset,
    observer: &dyn ProtocolObserver,
) -> Result<ExperimentResult> {
    let splits = chronological_split(ds)?;
    let mut cells = run_model_cells(
        &spec.dataset_id,
        ds,
        &splits,
        spec.model_kind,
        &[spec.calibration_kind],
        &spec.models,
        spec.seed,
        observer,
    )?;
    Ok(cells.pop().expect("one cell").result)
}

/// Settings shared by every cell of a grid run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub models: ModelConfig,
    pub seed: u64,
}

/// All nine cells, ordered E1–E9, with their predictions.
pub fn run_grid_detailed(
    dataset_id: &str,
    ds: &TimeOrderedDataset,
    config: &GridConfig,
    observer: &dyn ProtocolObserver,
) -> Result<Vec<CellOutput>> {
    let splits = chronological_split(ds)?;
    let mut cells = Vec::with_capacity(9);
    for kind in ModelKind::ALL {
        cells.extend(run_model_cells(
            dataset_id,
            ds,
            &splits,
            kind,
            &CalibrationKind::ALL,
            &config.models,
            config.seed,
            observer,
        )?);
    }
    cells.sort_by_key(|c| c.result.experiment_number());
    Ok(cells)
}

/// All nine cells, ordered E1–E9.
pub fn run_grid(dataset_id: &str, ds: &TimeOrderedDataset, config: &GridConfig) -> Result<Vec<ExperimentResult>> {
    run_grid_observed(dataset_id, ds, config, &NoopObserver)
}

pub fn run_grid_observed(
    dataset_id: &str,
    ds: &TimeOrderedDataset,
    config: &GridConfig,
    observer: &dyn ProtocolObserver,
) -> Result<Vec<ExperimentResult>> {
    Ok(run_grid_detailed(dataset_id, ds, config, observer)?
        .into_iter()
        .map(|c| c.result)
        .collect())
}

/// Fill `normalized_brier_recent` for every cell of one dataset's grid as the
/// cell's recent-set Brier over the raw logistic (E1) recent-set Brier.
pub fn normalize_results(grid: &mut [ExperimentResult]) -> Result<()> {
    let Some(first) = grid.first() else {
        return Ok(());
    };
    let dataset = first.dataset_id.clone();
    if grid.iter().any(|r| r.dataset_id != dataset) {
        return Err(Error::InvalidInput("normalisation grid mixes datasets".into()));
    }
    let denom = grid
        .iter()
        .find(|r| r.model == ModelKind::Logit && r.calibration == CalibrationKind::None)
        .ok_or_else(|| Error::InvalidInput(format!("dataset `{dataset}` has no E1 cell")))?
        .metrics
        .recent
        .brier;
    if denom <= 0.0 {
        return Err(Error::ZeroDenominator);
    }
    for r in grid.iter_mut() {
        r.normalized_brier_recent = Some(r.metrics.recent.brier / denom);
    }
    Ok(())
}

/// Run the grid on several datasets in parallel and normalise each.
/// Results come back in input order whatever the completion order.
pub fn run_benchmark(
    datasets: &[(String, TimeOrderedDataset)],
    config: &GridConfig,
    observer: &dyn ProtocolObserver,
) -> Vec<Result<Vec<CellOutput>>> {
    datasets
        .par_iter()
        .map(|(id, ds)| {
            let mut cells = run_grid_detailed(id, ds, config, observer)?;
            let mut results: Vec<ExperimentResult> = cells.iter().map(|c| c.result.clone()).collect();
            normalize_results(&mut results)?;
            for (c, r) in cells.iter_mut().zip(results) {
                c.result = r;
            }
            Ok(cells)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Brier,
    Auroc,
    Gini,
    /// Recent set only.
    NormalizedBrier,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Brier => "brier",
            Metric::Auroc => "auroc",
            Metric::Gini => "gini",
            Metric::NormalizedBrier => "normalized_brier",
        }
    }

    pub fn value(self, r: &ExperimentResult, split: Split) -> Option<f64> {
        let m = r.metrics.get(split);
        match self {
            Metric::Brier => Some(m.brier),
            Metric::Auroc => m.auroc,
            Metric::Gini => m.gini,
            Metric::NormalizedBrier => r.normalized_brier_recent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile by linear interpolation between closest ranks on sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl FiveNumber {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub experiment: String,
    pub model: ModelKind,
    pub calibration: CalibrationKind,
    pub n_datasets: usize,
    /// Datasets whose value was missing (single-class split).
    pub flagged_datasets: Vec<String>,
    pub summary: FiveNumber,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub metric: Metric,
    pub split: Split,
    pub cells: Vec<CellSummary>,
}

/// Five-number summary of `metric` on `split` across datasets, per grid cell.
pub fn summarize(results: &[ExperimentResult], metric: Metric, split: Split) -> Result<GridSummary> {
    let mut cells = Vec::with_capacity(9);
    for calibration in CalibrationKind::ALL {
        for model in ModelKind::ALL {
            let cell: Vec<&ExperimentResult> = results
                .iter()
                .filter(|r| r.model == model && r.calibration == calibration)
                .collect();
            let values: Vec<f64> = cell.iter().filter_map(|r| metric.value(r, split)).collect();
            let flagged_datasets = cell
                .iter()
                .filter(|r| metric.value(r, split).is_none())
                .map(|r| r.dataset_id.clone())
                .collect();
            let experiment = format!("E{}", experiment_number(model, calibration));
            let summary = FiveNumber::from_values(&values).ok_or_else(|| {
                Error::EmptyCell(format!("{experiment} ({model}, {calibration}) has no {} values", metric.name()))
            })?;
            cells.push(CellSummary {
                experiment,
                model,
                calibration,
                n_datasets: values.len(),
                flagged_datasets,
                summary,
            });
        }
    }
    Ok(GridSummary { metric, split, cells })
}

pub fn write_jsonl<W: Write>(results: &[ExperimentResult], mut w: W) -> Result<()> {
    for r in results {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io("<jsonl writer>", e))?;
    }
    w.flush().map_err(|e| Error::io("<jsonl writer>", e))
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<ExperimentResult>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::io("<jsonl reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let result: ExperimentResult = serde_json::from_str(&line)?;
        if result.schema_version != RESULT_SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported result schema version {}",
                result.schema_version
            )));
        }
        out.push(result);
    }
    Ok(out)
}

/// Wide CSV header: identifiers, then `n`, `default_rate`, `brier`, `auroc`
/// and `gini` for each split, then the normalised recent Brier.
pub fn wide_csv_header() -> Vec<String> {
    let mut h: Vec<String> = ["dataset_id", "experiment", "model", "calibration", "seed"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for split in Split::ALL {
        for col in ["n", "default_rate", "brier", "auroc", "gini"] {
            h.push(format!("{}_{col}", split.name()));
        }
    }
    h.push("normalized_brier_recent".into());
    h
}

pub fn write_wide_csv<W: Write>(results: &[ExperimentResult], w: W) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(w);
    w.write_record(wide_csv_header())?;
    for r in results {
        let mut rec = vec![
            r.dataset_id.clone(),
            r.experiment.clone(),
            r.model.to_string(),
            r.calibration.to_string(),
            r.seed.to_string(),
        ];
        for split in Split::ALL {
            let m = r.metrics.get(split);
            rec.push(m.n.to_string());
            rec.push(m.default_rate.to_string());
            rec.push(m.brier.to_string());
            rec.push(opt(m.auroc));
            rec.push(opt(m.gini));
        }
        rec.push(opt(r.normalized_brier_recent));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_numbering() {
        use CalibrationKind as C;
        use ModelKind as M;
        assert_eq!(experiment_number(M::Logit, C::None), 1);
        assert_eq!(experiment_number(M::Rf, C::None), 2);
        assert_eq!(experiment_number(M::Gbc, C::None), 3);
        assert_eq!(experiment_number(M::Logit, C::Sigmoid), 4);
        assert_eq!(experiment_number(M::Rf, C::Sigmoid), 5);
        assert_eq!(experiment_number(M::Gbc, C::Isotonic), 9);
    }

    #[test]
    fn five_number_examples() {
        let f = FiveNumber::from_values(&[0.3]).unwrap();
        assert_eq!((f.min, f.q1, f.median, f.q3, f.max), (0.3, 0.3, 0.3, 0.3, 0.3));
        let f = FiveNumber::from_values(&[5.0, 3.0, 1.0, 4.0, 2.0]).unwrap();
        assert_eq!((f.min, f.q1, f.median, f.q3, f.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        let f = FiveNumber::from_values(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((f.q1, f.median, f.q3), (1.75, 2.5, 3.25));
        assert!(FiveNumber::from_values(&[]).is_none());
    }

    fn fake(model: ModelKind, calibration: CalibrationKind, recent_brier: f64) -> ExperimentResult {
        let m = |brier| SplitMetrics {
            n: 10,
            default_rate: 0.1,
            brier,
            auroc: Some(0.7),
            gini: Some(0.4),
        };
        ExperimentResult {
            schema_version: RESULT_SCHEMA_VERSION,
            dataset_id: "d".into(),
            experiment: format!("E{}", experiment_number(model, calibration)),
            model,
            calibration,
            seed: 0,
            metrics: PerSplit {
                train: m(0.01),
                calibration: m(0.02),
                recent: m(recent_brier),
            },
            normalized_brier_recent: None,
            warnings: vec![],
        }
    }

    #[test]
    fn normalisation_divides_by_raw_logit() {
        let mut grid = vec![
            fake(ModelKind::Logit, CalibrationKind::None, 0.10),
            fake(ModelKind::Rf, CalibrationKind::None, 0.05),
            fake(ModelKind::Logit, CalibrationKind::Isotonic, 0.08),
        ];
        normalize_results(&mut grid).unwrap();
        assert_eq!(grid[0].normalized_brier_recent, Some(1.0));
        assert_eq!(grid[1].normalized_brier_recent, Some(0.5));
        assert_eq!(grid[2].normalized_brier_recent, Some(0.08 / 0.10));

        let mut zero = vec![fake(ModelKind::Logit, CalibrationKind::None, 0.0)];
        assert!(matches!(normalize_results(&mut zero), Err(Error::ZeroDenominator)));

        let mut no_e1 = vec![fake(ModelKind::Rf, CalibrationKind::None, 0.1)];
        assert!(normalize_results(&mut no_e1).is_err());
    }

    #[test]
    fn summarize_requires_every_cell() {
        let results = vec![fake(ModelKind::Logit, CalibrationKind::None, 0.1)];
        assert!(matches!(
            summarize(&results, Metric::Brier, Split::Recent),
            Err(Error::EmptyCell(_))
        ));
    }

    #[test]
    fn summarize_flags_missing_values() {
        let mut results = Vec::new();
        for (i, id) in ["a", "b", "c"].iter().enumerate() {
            for c in CalibrationKind::ALL {
                for m in ModelKind::ALL {
                    let mut r = fake(m, c, 0.1 + i as f64 * 0.01);
                    r.dataset_id = id.to_string();
                    if *id == "c" {
                        r.metrics.recent.auroc = None;
                    }
                    results.push(r);
                }
            }
        }
        let s = summarize(&results, Metric::Brier, Split::Recent).unwrap();
        assert_eq!(s.cells.len(), 9);
        assert_eq!(s.cells[0].experiment, "E1");
        assert!((s.cells[4].summary.median - 0.11).abs() < 1e-15);
        let s = summarize(&results, Metric::Auroc, Split::Recent).unwrap();
        assert_eq!(s.cells[0].n_datasets, 2);
        assert_eq!(s.cells[0].flagged_datasets, vec!["c".to_string()]);
    }

    #[test]
    fn jsonl_and_csv() {
        let mut r = fake(ModelKind::Gbc, CalibrationKind::Sigmoid, 0.07);
        r.metrics.recent.auroc = None;
        r.metrics.recent.gini = None;
        let mut buf = Vec::new();
        write_jsonl(&[r.clone(), r.clone()], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(read_jsonl(buf.as_slice()).unwrap(), vec![r.clone(), r.clone()]);

        let mut csv_buf = Vec::new();
        write_wide_csv(&[r], &mut csv_buf).unwrap();
        let text = String::from_utf8(csv_buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), wide_csv_header().len());
        assert!(lines[1].starts_with("d,E6,gbc,sigmoid,0,"));
    }
}
