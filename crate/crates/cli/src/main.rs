use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use pdcal::calibrators::{CalibrationKind, Calibrator};
use pdcal::config::{OutputFormat, RunConfig};
use pdcal::dataset::{
    chronological_split, generate_synthetic, load_csv, save_csv, CsvOptions, SyntheticSpec, TimeOrderedDataset,
    MIN_DEMO_ROWS, MIN_SPLIT_ROWS,
};
use pdcal::harness::{self, Metric, Split};
use pdcal::metrics::LabeledScores;
use pdcal::models::{ModelConfig, ModelFile, ModelKind, Scorer};
use pdcal::plot;
use pdcal::report::{DatasetReport, Panel, RankDemoReport, Report, REPORT_SCHEMA_VERSION};

/// Probability-of-default calibration toolkit.
#[derive(Parser)]
#[command(name = "pdcal", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic time-ordered credit dataset as CSV.
    Synth(SynthArgs),
    /// Fit a model on the training (first 60%) rows of a dataset.
    Fit(FitArgs),
    /// Fit a calibrator on the calibration (middle 20%) rows.
    Calibrate(CalibrateArgs),
    /// Score a dataset and print metrics per split.
    Evaluate(EvaluateArgs),
    /// Run the model × calibrator grid on every configured dataset.
    Benchmark(BenchmarkArgs),
    /// Show that halving predictions keeps AUROC but worsens Brier.
    DemoRankLimits(DemoArgs),
    /// Render figures from a saved report.
    Report(ReportArgs),
}

fn parse_probability(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1]"))
    }
}

fn parse_non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be finite and non-negative"))
    }
}

fn parse_finite(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be finite"))
    }
}

fn parse_at_least(min: usize) -> impl Fn(&str) -> Result<usize, String> + Clone {
    move |s| {
        let v: usize = s.parse().map_err(|e| format!("{e}"))?;
        if v >= min {
            Ok(v)
        } else {
            Err(format!("{v} is below the minimum of {min}"))
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 20_000, value_parser = parse_at_least(MIN_SPLIT_ROWS))]
    rows: usize,
    #[arg(long, default_value_t = 10, value_parser = parse_at_least(1))]
    features: usize,
    #[arg(long, default_value_t = 0.06, value_parser = parse_probability)]
    default_rate: f64,
    #[arg(long, default_value_t = 1.0, value_parser = parse_non_negative)]
    noise: f64,
    /// Shift of the latent score from the first row to the last.
    #[arg(long, default_value_t = 0.0, value_parser = parse_finite, allow_hyphen_values = true)]
    drift: f64,
    /// Weight of the interaction, quadratic and threshold terms in the latent score.
    #[arg(long, default_value_t = 0.0, value_parser = parse_non_negative)]
    nonlinearity: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    columns: ColumnArgs,
}

#[derive(Args, Clone)]
struct ColumnArgs {
    #[arg(long, default_value = "default")]
    label_column: String,
    #[arg(long, default_value = "time")]
    time_column: String,
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    columns: ColumnArgs,
    /// Replace missing feature values with the column median.
    #[arg(long)]
    impute_missing: bool,
}

impl DataArgs {
    fn load(&self) -> Result<TimeOrderedDataset> {
        let opts = CsvOptions {
            label_column: self.columns.label_column.clone(),
            time_column: self.columns.time_column.clone(),
            impute_missing: self.impute_missing,
        };
        load_csv(&self.data, &opts).with_context(|| format!("loading {}", self.data.display()))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Logit,
    Rf,
    Gbc,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Logit => ModelKind::Logit,
            ModelArg::Rf => ModelKind::Rf,
            ModelArg::Gbc => ModelKind::Gbc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CalibrationArg {
    None,
    Sigmoid,
    Isotonic,
}

impl From<CalibrationArg> for CalibrationKind {
    fn from(c: CalibrationArg) -> Self {
        match c {
            CalibrationArg::None => CalibrationKind::None,
            CalibrationArg::Sigmoid => CalibrationKind::Sigmoid,
            CalibrationArg::Isotonic => CalibrationKind::Isotonic,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Svg,
    Csv,
}

fn formats(args: &[FormatArg]) -> Vec<OutputFormat> {
    args.iter()
        .map(|f| match f {
            FormatArg::Svg => OutputFormat::Svg,
            FormatArg::Csv => OutputFormat::Csv,
        })
        .collect()
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Run config whose `[models]` table supplies hyperparameters.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model JSON written by `fit`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    method: CalibrationArg,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    /// Calibrator JSON written by `calibrate`; applied to calibration and recent sets.
    #[arg(long)]
    calibrator: Option<PathBuf>,
    #[arg(long, default_value_t = 10, value_parser = parse_at_least(2))]
    bins: usize,
    /// Directory for recent-set figures.
    #[arg(long)]
    plots: Option<PathBuf>,
    #[arg(long, value_enum, num_args = 1.., default_values_t = [FormatArg::Svg, FormatArg::Csv])]
    format: Vec<FormatArg>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// TOML run config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir` in the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides `report.formats` in the config.
    #[arg(long, value_enum, num_args = 1..)]
    format: Option<Vec<FormatArg>>,
    /// Skip figure files.
    #[arg(long)]
    no_plots: bool,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, default_value_t = 10_000, value_parser = parse_at_least(MIN_DEMO_ROWS))]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10, value_parser = parse_at_least(2))]
    bins: usize,
    /// Directory for the report JSON and figures.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, num_args = 1.., default_values_t = [FormatArg::Svg, FormatArg::Csv])]
    format: Vec<FormatArg>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON written by `benchmark`.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_enum, num_args = 1.., default_values_t = [FormatArg::Svg])]
    format: Vec<FormatArg>,
    #[arg(short, long)]
    output: PathBuf,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_rows: a.rows,
        n_features: a.features,
        base_default_rate: a.default_rate,
        noise_scale: a.noise,
        drift_rate: a.drift,
        nonlinearity: a.nonlinearity,
        seed: a.seed,
    };
    let ds = generate_synthetic(&spec)?;
    save_csv(&ds, &a.output, &a.columns.label_column, &a.columns.time_column)
        .with_context(|| format!("writing {}", a.output.display()))?;
    println!(
        "wrote {} rows, {} features, default rate {:.4} to {}",
        ds.n_rows(),
        ds.n_features(),
        ds.default_rate(),
        a.output.display()
    );
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let ds = a.data.load()?;
    let models = match &a.config {
        Some(p) => RunConfig::load(p)?.models,
        None => ModelConfig::default(),
    };
    let splits = chronological_split(&ds)?;
    let (x, y) = ds.slice(splits.train.clone());
    let kind = ModelKind::from(a.model);
    let model = Scorer::fit(kind, x, y, &models, a.seed)?;
    ModelFile::new(model, ds.feature_names().to_vec())
        .save(&a.output)
        .with_context(|| format!("writing {}", a.output.display()))?;
    println!(
        "fitted {kind} on training rows {}..{} ({} rows); model written to {}",
        splits.train.start,
        splits.train.end,
        y.len(),
        a.output.display()
    );
    Ok(())
}

fn load_model(path: &Path, ds: &TimeOrderedDataset) -> Result<Scorer> {
    let file = ModelFile::load(path).with_context(|| format!("loading {}", path.display()))?;
    if file.feature_names != ds.feature_names() {
        bail!(
            "model features {:?} do not match dataset features {:?}",
            file.feature_names,
            ds.feature_names()
        );
    }
    Ok(file.model)
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<()> {
    let ds = a.data.load()?;
    let model = load_model(&a.model, &ds)?;
    let splits = chronological_split(&ds)?;
    let (x, y) = ds.slice(splits.calibration.clone());
    let raw = model.predict_proba(x)?;
    let calibrator = Calibrator::fit(a.method.into(), &raw, y)?;
    let json = serde_json::to_string_pretty(&calibrator)?;
    std::fs::write(&a.output, json).with_context(|| format!("writing {}", a.output.display()))?;
    println!(
        "fitted {} calibrator on calibration rows {}..{}; written to {}",
        calibrator.kind(),
        splits.calibration.start,
        splits.calibration.end,
        a.output.display()
    );
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let ds = a.data.load()?;
    let model = load_model(&a.model, &ds)?;
    let calibrator = match &a.calibrator {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<Calibrator>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => Calibrator::Identity,
    };
    let splits = chronological_split(&ds)?;
    println!("{:<12} {:>7} {:>8} {:>8} {:>8} {:>8}", "split", "n", "rate", "brier", "auroc", "gini");
    let mut recent_panel = None;
    for split in Split::ALL {
        let (x, y) = ds.slice(split.range(&splits));
        let raw = model.predict_proba(x)?;
        let scores = if split == Split::Train { raw } else { calibrator.apply(&raw) };
        let ls = LabeledScores::new(scores, y.to_vec())?;
        let panel = Panel::from_scores(split.name(), &ls, a.bins)?;
        println!(
            "{:<12} {:>7} {:>8.4} {:>8.4} {:>8} {:>8}",
            split.name(),
            panel.n,
            panel.default_rate,
            panel.brier,
            fmt_opt(panel.auroc),
            fmt_opt(panel.gini)
        );
        if split == Split::Recent {
            recent_panel = Some(panel);
        }
    }
    if let (Some(dir), Some(panel)) = (&a.plots, recent_panel) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let files = plot::emit_panel(&panel, dir, "recent", &formats(&a.format))?;
        println!("wrote {} figure files to {}", files.len(), dir.display());
    }
    Ok(())
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Returns the number of datasets that failed.
fn cmd_benchmark(a: BenchmarkArgs) -> Result<usize> {
    let mut config = RunConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(dir) = a.output_dir {
        config.output_dir = dir;
    }
    if let Some(f) = &a.format {
        config.report.formats = formats(f);
    }
    let out = config.output_dir.clone();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let csv = config.csv_options();
    let mut failures: Vec<(String, String)> = Vec::new();
    let mut loaded = Vec::new();
    for d in config.resolved_datasets() {
        match d.load(&csv) {
            Ok(ds) => loaded.push((d.id, ds)),
            Err(e) => {
                warn!("dataset {} failed to load: {e}", d.id);
                failures.push((d.id, e.to_string()));
            }
        }
    }
    info!("running the grid on {} datasets", loaded.len());
    let runs = harness::run_benchmark(&loaded, &config.grid_config(), &harness::NoopObserver);

    let mut results = Vec::new();
    let mut dataset_reports = Vec::new();
    for ((id, ds), run) in loaded.iter().zip(runs) {
        match run {
            Ok(cells) => {
                let splits = chronological_split(ds)?;
                let recent_labels = &ds.labels()[splits.recent];
                dataset_reports.push(DatasetReport::from_cells(id, &cells, recent_labels, config.report.n_bins)?);
                results.extend(cells.into_iter().map(|c| c.result));
            }
            Err(e) => {
                warn!("dataset {id} failed: {e}");
                failures.push((id.clone(), e.to_string()));
            }
        }
    }

    harness::write_jsonl(&results, create_file(&out.join("results.jsonl"))?)?;
    harness::write_wide_csv(&results, create_file(&out.join("results.csv"))?)?;

    let mut summaries = Vec::new();
    for (metric, split) in [
        (Metric::NormalizedBrier, Split::Recent),
        (Metric::Brier, Split::Recent),
        (Metric::Brier, Split::Train),
        (Metric::Auroc, Split::Recent),
    ] {
        match harness::summarize(&results, metric, split) {
            Ok(s) => summaries.push(s),
            Err(e) => warn!("no {} summary for the {} set: {e}", metric.name(), split.name()),
        }
    }
    let report = Report {
        schema_version: REPORT_SCHEMA_VERSION,
        n_bins: config.report.n_bins,
        datasets: dataset_reports,
        summaries,
        failures: failures.clone(),
    };
    report.save(out.join("report.json"))?;
    let n_figures = if a.no_plots {
        0
    } else {
        plot::emit_plots(&report, &out.join("figures"), &config.report.formats)?.len()
    };

    println!(
        "{} datasets completed, {} failed; {} results written to {}",
        report.datasets.len(),
        failures.len(),
        results.len(),
        out.display()
    );
    if let Some(s) = report.summaries.first() {
        println!("median normalised recent-set Brier (raw logit = 1):");
        println!("{:<10} {:>8} {:>8} {:>8}", "", "logit", "rf", "gbc");
        for (row, cal) in CalibrationKind::ALL.iter().enumerate() {
            let cells = &s.cells[3 * row..3 * row + 3];
            println!(
                "{:<10} {:>8.4} {:>8.4} {:>8.4}",
                cal.name(),
                cells[0].summary.median,
                cells[1].summary.median,
                cells[2].summary.median
            );
        }
    }
    if n_figures > 0 {
        println!("{n_figures} figure files in {}", out.join("figures").display());
    }
    for (id, e) in &failures {
        println!("FAILED {id}: {e}");
    }
    Ok(failures.len())
}

fn cmd_demo(a: DemoArgs) -> Result<()> {
    let report = RankDemoReport::build(a.n, a.seed, a.bins)?;
    println!("{:<10} {:>10} {:>10}", "", "original", "halved");
    println!("{:<10} {:>10.4} {:>10.4}", "brier", report.original.brier, report.halved.brier);
    println!(
        "{:<10} {:>10} {:>10}",
        "auroc",
        fmt_opt(report.original.auroc),
        fmt_opt(report.halved.auroc)
    );
    println!("AUROC identical: {}", report.original.auroc == report.halved.auroc);
    println!("Brier increased: {}", report.halved.brier > report.original.brier);
    if let Some(dir) = &a.output {
        let files = plot::emit_rank_demo(&report, dir, &formats(&a.format))?;
        let path = dir.join("demo_report.json");
        std::fs::write(&path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", path.display()))?;
        println!("wrote report and {} figure files to {}", files.len(), dir.display());
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let report = Report::load(&a.report).with_context(|| format!("loading {}", a.report.display()))?;
    let files = plot::emit_plots(&report, &a.output, &formats(&a.format))?;
    println!("wrote {} figure files to {}", files.len(), a.output.display());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a)?,
        Command::Fit(a) => cmd_fit(a)?,
        Command::Calibrate(a) => cmd_calibrate(a)?,
        Command::Evaluate(a) => cmd_evaluate(a)?,
        Command::Benchmark(a) => {
            if cmd_benchmark(a)? > 0 {
                return Ok(ExitCode::from(1));
            }
        }
        Command::DemoRankLimits(a) => cmd_demo(a)?,
        Command::Report(a) => cmd_report(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
