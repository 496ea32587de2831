use std::path::Path;
use std::process::{Command, Output};

fn pdcal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdcal"))
        .args(args)
        .output()
        .expect("run pdcal")
}

fn ok(args: &[&str]) -> String {
    let out = pdcal(args);
    assert!(
        out.status.success(),
        "pdcal {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL_MODELS: &str = r#"
seed = 3
[models.random_forest]
n_trees = 10
max_depth = 6
[models.gradient_boosting]
n_stages = 10
"#;

#[test]
fn synth_writes_requested_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let stdout = ok(&["synth", "--rows", "2000", "--default-rate", "0.06", "--seed", "7", "-o", p(path)]);
        assert!(stdout.contains("2000 rows"));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 2001);
    assert!(text.starts_with("time,x0,"));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    for args in [
        vec!["synth", "--default-rate", "1.5", "-o", p(&out)],
        vec!["synth", "--rows", "5", "-o", p(&out)],
        vec!["demo-rank-limits", "--n", "99"],
        vec!["fit", "--data", "d.csv", "--model", "svm", "-o", "m.json"],
        vec!["no-such-command"],
    ] {
        assert_eq!(pdcal(&args).status.code(), Some(2), "{args:?}");
    }
    assert!(!out.exists());
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    let out = pdcal(&["benchmark", "--config", p(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.toml"));

    let bad_csv = dir.path().join("bad.csv");
    std::fs::write(&bad_csv, "time,x,default\n1,0.5,0\n2,0.1,2\n").unwrap();
    let out = pdcal(&["fit", "--data", p(&bad_csv), "--model", "logit", "-o", p(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));
}

#[test]
fn demo_reports_identical_auroc_and_worse_brier() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["demo-rank-limits", "--n", "10000", "-o", p(dir.path())]);
    assert!(stdout.contains("AUROC identical: true"));
    assert!(stdout.contains("Brier increased: true"));
    for name in ["demo_report.json", "original_reliability.svg", "halved_roc.csv", "halved_histogram.svg"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let roc = std::fs::read_to_string(dir.path().join("original_roc.csv")).unwrap();
    assert!(roc.starts_with("fpr,tpr\n"));
}

#[test]
fn fit_calibrate_evaluate_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let model = dir.path().join("model.json");
    let cal = dir.path().join("cal.json");
    let plots = dir.path().join("plots");
    ok(&["synth", "--rows", "3000", "--seed", "1", "--drift", "1.0", "-o", p(&data)]);
    ok(&["fit", "--data", p(&data), "--model", "gbc", "-o", p(&model)]);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(m["format_version"], 1);
    assert_eq!(m["model"]["kind"], "gradient_boosting");

    ok(&["calibrate", "--data", p(&data), "--model", p(&model), "--method", "isotonic", "-o", p(&cal)]);
    let c: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cal).unwrap()).unwrap();
    assert_eq!(c["type"], "isotonic");

    let stdout = ok(&[
        "evaluate",
        "--data",
        p(&data),
        "--model",
        p(&model),
        "--calibrator",
        p(&cal),
        "--plots",
        p(&plots),
        "--format",
        "svg",
    ]);
    for split in ["train", "calibration", "recent"] {
        assert!(stdout.lines().any(|l| l.starts_with(split)), "{split}");
    }
    assert!(plots.join("recent_reliability.svg").exists());
    assert!(!plots.join("recent_roc.csv").exists());
}

#[test]
fn benchmark_writes_all_artifacts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "output_dir = \"first\"\n{SMALL_MODELS}\n[[families]]\nprefix = \"s\"\ncount = 2\n[families.spec]\nn_rows = 1500\ndrift_rate = 1.0\n"
        ),
    )
    .unwrap();
    let stdout = ok(&["benchmark", "--config", p(&config)]);
    assert!(stdout.contains("2 datasets completed, 0 failed"));
    ok(&["benchmark", "--config", p(&config), "--output-dir", p(&dir.path().join("second"))]);

    let first = dir.path().join("first");
    let jsonl = std::fs::read_to_string(first.join("results.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 18);
    assert_eq!(
        std::fs::read(first.join("results.jsonl")).unwrap(),
        std::fs::read(dir.path().join("second/results.jsonl")).unwrap()
    );
    let csv = std::fs::read_to_string(first.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 19);
    assert!(first.join("figures/boxplot_normalized_brier_recent.svg").exists());
    assert!(first.join("figures/s_0_E9_reliability.svg").exists());
    assert!(first.join("figures/s_1_E1_roc.csv").exists());

    let report = first.join("report.json");
    let replot = dir.path().join("replot");
    ok(&["report", "--report", p(&report), "--format", "csv", "-o", p(&replot)]);
    assert_eq!(
        std::fs::read(replot.join("s_0_E5_roc.csv")).unwrap(),
        std::fs::read(first.join("figures/s_0_E5_roc.csv")).unwrap()
    );
}

#[test]
fn benchmark_reports_failed_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "output_dir = \"out\"\n{SMALL_MODELS}\n[[datasets]]\nid = \"gone\"\npath = \"missing.csv\"\n[[datasets]]\nid = \"ok\"\n[datasets.synthetic]\nn_rows = 1000\n"
        ),
    )
    .unwrap();
    let out = pdcal(&["benchmark", "--config", p(&config), "--no-plots"]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAILED gone"));
    let jsonl = std::fs::read_to_string(dir.path().join("out/results.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 9);
    assert!(!dir.path().join("out/figures").exists());
}
