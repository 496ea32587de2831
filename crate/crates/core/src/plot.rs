//! Standalone SVG figures and CSV series for reports.
//!
//! Every SVG is a complete document with inline styles and no external
//! references. Plot elements carry a `class` so they can be counted:
//! `marker`, `diagonal`, `curve`, `bar`, `box`, `legend`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::OutputFormat;
use crate::harness::GridSummary;
use crate::metrics::{ReliabilityBins, RocPoint};
use crate::report::{Panel, RankDemoReport, Report};
use crate::{Error, Result};

const SIZE: f64 = 420.0;
const MARGIN: f64 = 50.0;
const INNER: f64 = SIZE - 2.0 * MARGIN;

fn px(x: f64) -> f64 {
    MARGIN + INNER * x
}

fn py(y: f64) -> f64 {
    SIZE - MARGIN - INNER * y
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(title: &str, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif" font-size="11">
<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>
<text x="{cx}" y="20" text-anchor="middle" font-size="13">{title}</text>
<rect x="{MARGIN}" y="{MARGIN}" width="{INNER}" height="{INNER}" fill="none" stroke="black"/>
<text x="{cx}" y="{xl}" text-anchor="middle">{x_label}</text>
<text x="14" y="{cx}" text-anchor="middle" transform="rotate(-90 14 {cx})">{y_label}</text>
"#,
        cx = SIZE / 2.0,
        xl = SIZE - 12.0,
        title = escape(title),
        x_label = escape(x_label),
        y_label = escape(y_label),
    );
    s
}

fn unit_ticks(s: &mut String) {
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="middle">{v}</text><text x="{lx:.2}" y="{ly:.2}" text-anchor="end">{v}</text>"#,
            x = px(v),
            y = SIZE - MARGIN + 14.0,
            lx = MARGIN - 4.0,
            ly = py(v) + 4.0,
        );
    }
}

fn diagonal(s: &mut String) {
    let _ = writeln!(
        s,
        r#"<line class="diagonal" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
}

/// Mean predicted probability against observed default rate, one marker per
/// non-empty bin. Empty bins are omitted and counted in the legend.
pub fn reliability_svg(bins: &ReliabilityBins, title: &str) -> String {
    let mut s = open(title, "Predicted PD", "Observed default rate");
    unit_ticks(&mut s);
    diagonal(&mut s);
    for b in bins.occupied() {
        let (Some(m), Some(r)) = (b.mean_predicted, b.observed_rate) else {
            continue;
        };
        let _ = writeln!(
            s,
            r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="4" fill="steelblue"><title>n={}</title></circle>"#,
            px(m),
            py(r),
            b.count
        );
    }
    let empty = bins.bins.iter().filter(|b| b.is_empty()).count();
    let mut legend = format!("{} bins, dashed: perfect calibration", bins.n_bins);
    if empty > 0 {
        let _ = write!(legend, "; {empty} empty bins omitted");
    }
    let _ = writeln!(
        s,
        r#"<text class="legend" x="{:.2}" y="{:.2}">{}</text>"#,
        MARGIN + 6.0,
        MARGIN + 14.0,
        escape(&legend)
    );
    s.push_str("</svg>\n");
    s
}

pub fn histogram_svg(counts: &[usize], title: &str) -> String {
    let mut s = open(title, "Predicted PD", "Count");
    let max = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let w = 1.0 / counts.len().max(1) as f64;
    for (i, &c) in counts.iter().enumerate() {
        let h = c as f64 / max;
        let _ = writeln!(
            s,
            r#"<rect class="bar" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="steelblue" stroke="white"><title>{c}</title></rect>"#,
            px(i as f64 * w),
            py(h),
            INNER * w,
            INNER * h
        );
    }
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{v}</text>"#,
            px(v),
            SIZE - MARGIN + 14.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text class="legend" x="{:.2}" y="{:.2}">max bin {}</text>"#,
        MARGIN + 6.0,
        MARGIN + 14.0,
        max as usize
    );
    s.push_str("</svg>\n");
    s
}

pub fn roc_svg(points: &[RocPoint], title: &str, auroc: Option<f64>) -> String {
    let mut s = open(title, "False positive rate", "True positive rate");
    unit_ticks(&mut s);
    diagonal(&mut s);
    if !points.is_empty() {
        let pts: Vec<String> = points.iter().map(|p| format!("{:.2},{:.2}", px(p.fpr), py(p.tpr))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="curve" points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
            pts.join(" ")
        );
    }
    let legend = match auroc {
        Some(a) => format!("AUROC {a:.4}"),
        None => "single class: no ROC curve".to_string(),
    };
    let _ = writeln!(
        s,
        r#"<text class="legend" x="{:.2}" y="{:.2}">{}</text>"#,
        MARGIN + 6.0,
        MARGIN + 14.0,
        escape(&legend)
    );
    s.push_str("</svg>\n");
    s
}

/// One box per grid cell: whiskers at min/max, box from Q1 to Q3, median line.
pub fn boxplot_svg(summary: &GridSummary) -> String {
    let title = format!("{} ({} set)", summary.metric.name(), summary.split.name());
    let mut s = open(&title, "Experiment", summary.metric.name());
    let lo = summary.cells.iter().map(|c| c.summary.min).fold(f64::INFINITY, f64::min);
    let hi = summary.cells.iter().map(|c| c.summary.max).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else if lo.is_finite() {
        (lo - 0.5, lo + 0.5)
    } else {
        (0.0, 1.0)
    };
    let y = |v: f64| py((v - lo) / (hi - lo));
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
            MARGIN - 4.0,
            y(v) + 4.0
        );
    }
    let n = summary.cells.len().max(1) as f64;
    for (i, c) in summary.cells.iter().enumerate() {
        let f = c.summary;
        let cx = px((i as f64 + 0.5) / n);
        let half = 0.3 * INNER / n;
        let _ = writeln!(
            s,
            r#"<g class="box"><title>{exp} {model} {cal} n={n}</title><line x1="{cx:.2}" y1="{ymin:.2}" x2="{cx:.2}" y2="{ymax:.2}" stroke="black"/><rect x="{x0:.2}" y="{yq3:.2}" width="{w:.2}" height="{h:.2}" fill="lightsteelblue" stroke="black"/><line x1="{x0:.2}" y1="{ymed:.2}" x2="{x1:.2}" y2="{ymed:.2}" stroke="black" stroke-width="2"/></g>"#,
            exp = c.experiment,
            model = c.model,
            cal = c.calibration,
            n = c.n_datasets,
            ymin = y(f.min),
            ymax = y(f.max),
            x0 = cx - half,
            x1 = cx + half,
            yq3 = y(f.q3),
            w = 2.0 * half,
            h = (y(f.q1) - y(f.q3)).max(0.0),
            ymed = y(f.median),
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            SIZE - MARGIN + 14.0,
            c.experiment
        );
    }
    s.push_str("</svg>\n");
    s
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn reliability_csv(bins: &ReliabilityBins) -> String {
    let mut s = String::from("lower,upper,count,mean_predicted,observed_rate\n");
    for b in &bins.bins {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            b.lower,
            b.upper,
            b.count,
            opt(b.mean_predicted),
            opt(b.observed_rate)
        );
    }
    s
}

pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut s = String::from("fpr,tpr\n");
    for p in points {
        let _ = writeln!(s, "{},{}", p.fpr, p.tpr);
    }
    s
}

pub fn histogram_csv(counts: &[usize]) -> String {
    let mut s = String::from("lower,upper,count\n");
    let w = 1.0 / counts.len().max(1) as f64;
    for (i, c) in counts.iter().enumerate() {
        let _ = writeln!(s, "{},{},{c}", i as f64 * w, (i + 1) as f64 * w);
    }
    s
}

pub fn boxplot_csv(summary: &GridSummary) -> String {
    let mut s = String::from("experiment,model,calibration,n_datasets,min,q1,median,q3,max\n");
    for c in &summary.cells {
        let f = c.summary;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            c.experiment, c.model, c.calibration, c.n_datasets, f.min, f.q1, f.median, f.q3, f.max
        );
    }
    s
}

/// File-name-safe form of an identifier.
pub fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn write(dir: &Path, name: String, body: String, out: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    out.push(path);
    Ok(())
}

/// Write the reliability, histogram and ROC figures of a panel as
/// `{stem}_reliability.*`, `{stem}_histogram.*` and `{stem}_roc.*`.
pub fn emit_panel(panel: &Panel, dir: &Path, stem: &str, formats: &[OutputFormat]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for &f in formats {
        match f {
            OutputFormat::Svg => {
                write(
                    dir,
                    format!("{stem}_reliability.svg"),
                    reliability_svg(&panel.reliability, &format!("{}: predicted vs observed", panel.label)),
                    &mut out,
                )?;
                write(
                    dir,
                    format!("{stem}_histogram.svg"),
                    histogram_svg(&panel.histogram, &format!("{}: PD histogram", panel.label)),
                    &mut out,
                )?;
                write(
                    dir,
                    format!("{stem}_roc.svg"),
                    roc_svg(&panel.roc, &format!("{}: ROC curve", panel.label), panel.auroc),
                    &mut out,
                )?;
            }
            OutputFormat::Csv => {
                write(dir, format!("{stem}_reliability.csv"), reliability_csv(&panel.reliability), &mut out)?;
                write(dir, format!("{stem}_histogram.csv"), histogram_csv(&panel.histogram), &mut out)?;
                write(dir, format!("{stem}_roc.csv"), roc_csv(&panel.roc), &mut out)?;
            }
        }
    }
    Ok(out)
}

/// One figure file per format for every dataset × cell panel and every grid
/// summary. Returns the written paths in a deterministic order.
pub fn emit_plots(report: &Report, dir: &Path, formats: &[OutputFormat]) -> Result<Vec<PathBuf>> {
    report.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for d in &report.datasets {
        for c in &d.cells {
            let stem = format!("{}_{}", file_stem(&d.dataset_id), c.experiment);
            out.extend(emit_panel(&c.recent, dir, &stem, formats)?);
        }
    }
    for s in &report.summaries {
        let stem = format!("boxplot_{}_{}", s.metric.name(), s.split.name());
        for &f in formats {
            match f {
                OutputFormat::Svg => write(dir, format!("{stem}.svg"), boxplot_svg(s), &mut out)?,
                OutputFormat::Csv => write(dir, format!("{stem}.csv"), boxplot_csv(s), &mut out)?,
            }
        }
    }
    Ok(out)
}

pub fn emit_rank_demo(report: &RankDemoReport, dir: &Path, formats: &[OutputFormat]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = emit_panel(&report.original, dir, "original", formats)?;
    out.extend(emit_panel(&report.halved, dir, "halved", formats)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{reliability_bins, LabeledScores};

    #[test]
    fn reliability_markers_and_diagonal() {
        let scores: Vec<f64> = (0..10).map(|i| i as f64 / 10.0 + 0.05).collect();
        let labels = vec![0, 0, 0, 1, 0, 1, 1, 0, 1, 1];
        let ls = LabeledScores::new(scores, labels).unwrap();
        let svg = reliability_svg(&reliability_bins(&ls, 10).unwrap(), "t");
        assert_eq!(svg.matches(r#"class="marker""#).count(), 10);
        assert_eq!(svg.matches(r#"class="diagonal""#).count(), 1);
        assert!(!svg.contains("omitted"));
        assert!(svg.starts_with("<svg xmlns="));
        assert!(!svg.contains("href"));
    }

    #[test]
    fn empty_bins_are_omitted_and_noted() {
        let ls = LabeledScores::new(vec![0.05, 0.06, 0.95], vec![0, 1, 1]).unwrap();
        let svg = reliability_svg(&reliability_bins(&ls, 10).unwrap(), "t");
        assert_eq!(svg.matches(r#"class="marker""#).count(), 2);
        assert!(svg.contains("8 empty bins omitted"));
    }

    #[test]
    fn roc_csv_format() {
        let pts = [
            RocPoint { fpr: 0.0, tpr: 0.0 },
            RocPoint { fpr: 0.5, tpr: 1.0 },
            RocPoint { fpr: 1.0, tpr: 1.0 },
        ];
        assert_eq!(roc_csv(&pts), "fpr,tpr\n0,0\n0.5,1\n1,1\n");
    }

    #[test]
    fn titles_are_escaped() {
        let svg = histogram_svg(&[1, 2], "a<b & c");
        assert!(svg.contains("a&lt;b &amp; c"));
        assert_eq!(svg.matches(r#"class="bar""#).count(), 2);
    }

    #[test]
    fn stems_are_sanitised() {
        assert_eq!(file_stem("book a/2020"), "book_a_2020");
    }
}
