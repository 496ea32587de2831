//! Time-ordered loan datasets: CSV ingestion, chronological splitting and
//! seeded synthetic generators.

use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::metrics::LabeledScores;
use crate::{Error, Result};

/// Minimum row count for a 60/20/20 split with every part non-empty.
pub const MIN_SPLIT_ROWS: usize = 10;

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl Matrix {
    /// Row count is inferred from the data; zero columns means zero rows.
    pub fn new(data: Vec<f64>, n_cols: usize) -> Result<Self> {
        let n_rows = data.len().checked_div(n_cols).unwrap_or(0);
        Self::with_shape(data, n_rows, n_cols)
    }

    pub fn with_shape(data: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::InvalidInput(format!(
                "{} values do not fill {n_rows} rows of {n_cols} columns",
                data.len()
            )));
        }
        Ok(Self { data, n_rows, n_cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        Ok(Self {
            data: rows.concat(),
            n_rows: rows.len(),
            n_cols,
        })
    }

    pub fn view(&self) -> MatrixView<'_> {
        MatrixView {
            data: &self.data,
            n_rows: self.n_rows,
            n_cols: self.n_cols,
        }
    }

    pub fn rows(&self, range: Range<usize>) -> MatrixView<'_> {
        self.view().rows(range)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }
}

/// Borrowed block of consecutive matrix rows.
#[derive(Debug, Clone, Copy)]
pub struct MatrixView<'a> {
    data: &'a [f64],
    n_rows: usize,
    n_cols: usize,
}

impl<'a> MatrixView<'a> {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    pub fn rows(&self, range: Range<usize>) -> MatrixView<'a> {
        assert!(range.start <= range.end && range.end <= self.n_rows, "row range out of bounds");
        MatrixView {
            data: &self.data[range.start * self.n_cols..range.end * self.n_cols],
            n_rows: range.end - range.start,
            n_cols: self.n_cols,
        }
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &'a [f64]> + 'a {
        let (data, n_cols) = (self.data, self.n_cols);
        (0..self.n_rows).map(move |i| &data[i * n_cols..(i + 1) * n_cols])
    }
}

/// Loans in chronological order with binary default labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeOrderedDataset {
    features: Matrix,
    labels: Vec<u8>,
    timestamps: Vec<i64>,
    feature_names: Vec<String>,
}

impl TimeOrderedDataset {
    pub fn new(
        features: Matrix,
        labels: Vec<u8>,
        timestamps: Vec<i64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = labels.len();
        if features.n_rows() != n || timestamps.len() != n {
            return Err(Error::InvalidInput(format!(
                "row counts disagree: {} feature rows, {} labels, {} timestamps",
                features.n_rows(),
                n,
                timestamps.len()
            )));
        }
        if feature_names.len() != features.n_cols() {
            return Err(Error::InvalidInput(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.n_cols()
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::InvalidLabel {
                row: i + 1,
                value: labels[i].to_string(),
            });
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput(format!(
                "timestamps decrease at row {}",
                i + 2
            )));
        }
        if features.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            timestamps,
            feature_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn default_rate(&self) -> f64 {
        self.labels.iter().map(|&y| usize::from(y)).sum::<usize>() as f64 / self.n_rows() as f64
    }

    /// Features and labels of a contiguous row range.
    pub fn slice(&self, range: Range<usize>) -> (MatrixView<'_>, &[u8]) {
        (self.features.rows(range.clone()), &self.labels[range])
    }
}

/// Contiguous train / calibration / recent row ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Range<usize>,
    pub calibration: Range<usize>,
    pub recent: Range<usize>,
}

/// 60/20/20 boundaries at `floor(0.6 N)` and `floor(0.8 N)` for `n` rows.
pub fn split_rows(n: usize) -> Result<SplitIndices> {
    if n < MIN_SPLIT_ROWS {
        return Err(Error::TooSmall {
            rows: n,
            min: MIN_SPLIT_ROWS,
        });
    }
    // integer arithmetic keeps the floors exact
    let a = n * 6 / 10;
    let b = n * 8 / 10;
    Ok(SplitIndices {
        train: 0..a,
        calibration: a..b,
        recent: b..n,
    })
}

pub fn chronological_split(ds: &TimeOrderedDataset) -> Result<SplitIndices> {
    split_rows(ds.n_rows())
}

/// Column names and missing-value handling for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub label_column: String,
    pub time_column: String,
    /// Replace missing feature values by the column median instead of failing.
    #[serde(default)]
    pub impute_missing: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label_column: "default".into(),
            time_column: "time".into(),
            impute_missing: false,
        }
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim(),
        "" | "NA" | "N/A" | "NaN" | "nan" | "null" | "NULL"
    )
}

/// Integer ordinal, ISO-8601 date, or RFC 3339 timestamp (as days since epoch).
fn parse_time(cell: &str) -> Option<i64> {
    let cell = cell.trim();
    if let Ok(t) = cell.parse::<i64>() {
        return Some(t);
    }
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1)?;
    if let Ok(d) = cell.parse::<NaiveDate>() {
        return Some((d - epoch).num_days());
    }
    DateTime::parse_from_rfc3339(cell)
        .ok()
        .map(|dt| (dt.date_naive() - epoch).num_days())
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<TimeOrderedDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, opts)
}

/// Parse a CSV with a header row. Rows are stably sorted by the time column.
pub fn read_csv<R: Read>(reader: R, opts: &CsvOptions) -> Result<TimeOrderedDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    for (i, h) in headers.iter().enumerate() {
        if headers[..i].contains(h) {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let label_idx = find(&opts.label_column)?;
    let time_idx = find(&opts.time_column)?;
    let feature_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| i != label_idx && i != time_idx)
        .collect();
    let feature_names: Vec<String> = feature_idx.iter().map(|&i| headers[i].clone()).collect();
    let d = feature_idx.len();

    let mut labels = Vec::new();
    let mut timestamps = Vec::new();
    let mut values: Vec<Option<f64>> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let cell = |i: usize| record.get(i).unwrap_or("");
        let label = match cell(label_idx).trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::InvalidLabel {
                    row,
                    value: other.to_string(),
                })
            }
        };
        let t = cell(time_idx);
        let time = parse_time(t).ok_or_else(|| Error::ParseCell {
            row,
            column: opts.time_column.clone(),
            value: t.to_string(),
        })?;
        for &j in &feature_idx {
            let c = cell(j);
            if is_missing(c) {
                if !opts.impute_missing {
                    return Err(Error::MissingValue {
                        row,
                        column: headers[j].clone(),
                    });
                }
                values.push(None);
                continue;
            }
            match c.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(Some(v)),
                _ => {
                    return Err(Error::ParseCell {
                        row,
                        column: headers[j].clone(),
                        value: c.to_string(),
                    })
                }
            }
        }
        labels.push(label);
        timestamps.push(time);
    }

    let data = if d == 0 {
        Vec::new()
    } else {
        impute_medians(values, d, &feature_names)?
    };

    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by_key(|&i| timestamps[i]);
    let mut sorted = Vec::with_capacity(data.len());
    for &i in &order {
        sorted.extend_from_slice(&data[i * d..(i + 1) * d]);
    }
    TimeOrderedDataset::new(
        Matrix::with_shape(sorted, labels.len(), d)?,
        order.iter().map(|&i| labels[i]).collect(),
        order.iter().map(|&i| timestamps[i]).collect(),
        feature_names,
    )
}

fn impute_medians(values: Vec<Option<f64>>, d: usize, names: &[String]) -> Result<Vec<f64>> {
    let mut medians = vec![0.0; d];
    if values.iter().any(Option::is_none) {
        for (j, median) in medians.iter_mut().enumerate() {
            let mut col: Vec<f64> = values.iter().skip(j).step_by(d).flatten().copied().collect();
            if col.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "column `{}` has no values to impute from",
                    names[j]
                )));
            }
            col.sort_by(f64::total_cmp);
            let m = col.len();
            *median = if m % 2 == 1 {
                col[m / 2]
            } else {
                (col[m / 2 - 1] + col[m / 2]) / 2.0
            };
        }
    }
    Ok(values
        .into_iter()
        .enumerate()
        .map(|(k, v)| v.unwrap_or(medians[k % d]))
        .collect())
}

/// Write `time, features..., label` with a header row. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_csv<W: Write>(
    ds: &TimeOrderedDataset,
    writer: W,
    label_column: &str,
    time_column: &str,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![time_column.to_string()];
    header.extend(ds.feature_names().iter().cloned());
    header.push(label_column.to_string());
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for (i, row) in ds.features().view().iter_rows().enumerate().take(ds.n_rows()) {
        record.clear();
        record.push(ds.timestamps()[i].to_string());
        record.extend(row.iter().map(|v| v.to_string()));
        record.push(ds.labels()[i].to_string());
        w.write_record(&record)?;
    }
    if ds.n_features() == 0 {
        for i in 0..ds.n_rows() {
            w.write_record([ds.timestamps()[i].to_string(), ds.labels()[i].to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_csv(
    ds: &TimeOrderedDataset,
    path: impl AsRef<Path>,
    label_column: &str,
    time_column: &str,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(ds, std::io::BufWriter::new(file), label_column, time_column)
}

/// Parameters of the synthetic credit-portfolio generator.
///
/// Each row draws standard-normal features; the latent score is a fixed
/// unit-norm linear combination of them, plus `nonlinearity` times a
/// unit-variance mix of an interaction, a quadratic and a threshold term
/// (see [`nonlinear_term`]), plus `drift_rate · (row / n_rows)`.
/// The default probability is `σ((score − t) / noise_scale)` with `t` chosen
/// so the mean PD equals `base_default_rate`, and the label is a Bernoulli
/// draw of that PD. `noise_scale = 0` makes labels a hard threshold of the
/// score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub n_features: usize,
    pub base_default_rate: f64,
    pub noise_scale: f64,
    pub drift_rate: f64,
    pub nonlinearity: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_rows: 20_000,
            n_features: 10,
            base_default_rate: 0.06,
            noise_scale: 1.0,
            drift_rate: 0.0,
            nonlinearity: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.base_default_rate) {
            return Err(Error::InvalidInput(format!(
                "base_default_rate {} outside [0, 1]",
                self.base_default_rate
            )));
        }
        if self.n_rows < MIN_SPLIT_ROWS {
            return Err(Error::TooSmall {
                rows: self.n_rows,
                min: MIN_SPLIT_ROWS,
            });
        }
        if self.n_features == 0 {
            return Err(Error::InvalidInput("n_features must be at least 1".into()));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise_scale {} must be finite and non-negative",
                self.noise_scale
            )));
        }
        if !(self.nonlinearity >= 0.0 && self.nonlinearity.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "nonlinearity {} must be finite and non-negative",
                self.nonlinearity
            )));
        }
        if !self.drift_rate.is_finite() {
            return Err(Error::InvalidInput("drift_rate must be finite".into()));
        }
        Ok(())
    }
}

/// A synthetic dataset together with the PD each label was drawn from.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: TimeOrderedDataset,
    pub latent_pd: Vec<f64>,
}

const SYNTHETIC_PERIODS: usize = 104;

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TimeOrderedDataset> {
    generate_synthetic_with_truth(spec).map(|s| s.dataset)
}

pub fn generate_synthetic_with_truth(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let n = spec.n_rows;
    let d = spec.n_features;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut weights: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        weights.iter_mut().for_each(|w| *w /= norm);
    } else {
        weights[0] = 1.0;
    }

    let mut data = Vec::with_capacity(n * d);
    let mut latent = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = spec.drift_rate * i as f64 / n as f64;
        for w in &weights {
            let x: f64 = rng.sample(StandardNormal);
            s += w * x;
            data.push(x);
        }
        if spec.nonlinearity > 0.0 {
            s += spec.nonlinearity * nonlinear_term(&data[i * d..]);
        }
        latent.push(s);
    }

    let latent_pd = latent_to_pd(&latent, spec.base_default_rate, spec.noise_scale);
    let labels: Vec<u8> = latent_pd
        .iter()
        .map(|&p| u8::from(rng.random::<f64>() < p))
        .collect();
    let timestamps = (0..n).map(|i| (i * SYNTHETIC_PERIODS / n) as i64).collect();
    let names = (0..d).map(|j| format!("x{j}")).collect();
    let dataset = TimeOrderedDataset::new(Matrix::new(data, d)?, labels, timestamps, names)?;
    Ok(SyntheticDataset { dataset, latent_pd })
}

/// `x₀x₁`, `(x₂² − 1)/√2` and a standardised indicator of `x₃ > 1`, averaged
/// with weight `1/√3` each. Indices wrap when there are fewer than four
/// features.
pub fn nonlinear_term(row: &[f64]) -> f64 {
    // P(Z > 1) for a standard normal
    const TAIL: f64 = 0.158_655_253_931_457_05;
    let d = row.len();
    let x = |j: usize| row[j % d];
    let interaction = x(0) * x(1);
    let quadratic = (x(2) * x(2) - 1.0) / std::f64::consts::SQRT_2;
    let threshold = (f64::from(u8::from(x(3) > 1.0)) - TAIL) / (TAIL * (1.0 - TAIL)).sqrt();
    (interaction + quadratic + threshold) / 3f64.sqrt()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Map latent scores to PDs whose mean is `rate`.
fn latent_to_pd(latent: &[f64], rate: f64, noise: f64) -> Vec<f64> {
    let n = latent.len();
    if rate <= 0.0 {
        return vec![0.0; n];
    }
    if rate >= 1.0 {
        return vec![1.0; n];
    }
    if noise == 0.0 {
        let mut sorted = latent.to_vec();
        sorted.sort_by(f64::total_cmp);
        let k = ((rate * n as f64).round() as usize).clamp(0, n);
        let cut = match k {
            0 => sorted[n - 1] + 1.0,
            k if k == n => sorted[0] - 1.0,
            k => (sorted[n - k - 1] + sorted[n - k]) / 2.0,
        };
        return latent.iter().map(|&s| if s > cut { 1.0 } else { 0.0 }).collect();
    }
    let mean_pd = |t: f64| latent.iter().map(|&s| sigmoid((s - t) / noise)).sum::<f64>() / n as f64;
    let (lo_s, hi_s) = latent
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    // mean_pd is decreasing in t; bracket wide enough for any rate in (0, 1)
    let span = 50.0 * noise + 1.0;
    let (mut lo, mut hi) = (lo_s - span, hi_s + span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_pd(mid) > rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    latent.iter().map(|&s| sigmoid((s - t) / noise)).collect()
}

/// Minimum size for [`make_rank_demo_scores`].
pub const MIN_DEMO_ROWS: usize = 100;

/// Shape parameters of the two mirrored Beta components used by
/// [`make_rank_demo_scores`].
pub const DEMO_BETA: (f64, f64) = (1.0, 2.0);

/// Perfectly calibrated scores with strong rank power: each score comes from
/// an equal mixture of `Beta(1, 2)` and `Beta(2, 1)` and its label is a
/// Bernoulli draw with that score as probability.
pub fn make_rank_demo_scores(n: usize, seed: u64) -> Result<LabeledScores> {
    if n < MIN_DEMO_ROWS {
        return Err(Error::TooSmall {
            rows: n,
            min: MIN_DEMO_ROWS,
        });
    }
    let (a, b) = DEMO_BETA;
    let low = Beta::new(a, b).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let high = Beta::new(b, a).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let p: f64 = if rng.random::<bool>() {
            low.sample(&mut rng)
        } else {
            high.sample(&mut rng)
        };
        scores.push(p);
        labels.push(u8::from(rng.random::<f64>() < p));
    }
    LabeledScores::new(scores, labels)
}
