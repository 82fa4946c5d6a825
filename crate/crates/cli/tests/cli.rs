use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spreadcast::data::load_dataset;
use spreadcast::{forecast_next, TrainedPipeline};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spreadcast")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Seeded synthetic data with `n` months and `d` features.
fn synthetic(dir: &TempDir, n: usize, d: usize) -> PathBuf {
    let out = dir.path().join("synth");
    ok(&["--out", p(&out), "--seed", "3", "synth", "--n", &n.to_string(), "--d", &d.to_string()]);
    out.join("synthetic.csv")
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn ingest_merges_and_differences() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.csv", "date,cpi\n2020-01-01,1\n2020-02-01,3\n2020-03-01,6\n");
    let b = write(&dir, "b.csv", "date,spread\n2020-01,100\n2020-02,\n2020-03,120\n");
    let out = dir.path().join("out");
    ok(&["--out", p(&out), "ingest", "-i", p(&a), "-i", p(&b)]);
    let merged = fs::read_to_string(out.join("merged.csv")).unwrap();
    let mut lines = merged.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[0], "date");
    assert!(header.contains(&"cpi") && header.contains(&"d_cpi") && header.contains(&"spread"));
    assert!(!header.contains(&"d_spread"), "target must not be differenced");
    // The first month has no difference and is dropped; the spread gap is forward-filled.
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    let spread = header.iter().position(|h| *h == "spread").unwrap();
    assert_eq!(rows[0].split(',').nth(spread), Some("100"));

    ok(&["--out", p(&out), "ingest", "--no-differences", "-i", p(&a), "-i", p(&b)]);
    let plain = fs::read_to_string(out.join("merged.csv")).unwrap();
    assert!(!plain.lines().next().unwrap().contains("d_cpi"));
}

#[test]
fn ingest_is_idempotent() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.csv", "date,cpi,spread\n2020-01,1,100\n2020-02,3,110\n2020-03,6,120\n");
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    ok(&["--out", p(&first), "ingest", "-i", p(&a)]);
    let merged = first.join("merged.csv");
    ok(&["--out", p(&second), "ingest", "-i", p(&merged)]);
    assert_eq!(fs::read_to_string(&merged).unwrap(), fs::read_to_string(second.join("merged.csv")).unwrap());
}

#[test]
fn missing_date_column_is_named() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.csv", "month,spread\n2020-01,1\n");
    let out = run(&["--out", p(&dir.path().join("o")), "ingest", "-i", p(&a)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("date"), "{err}");
}

#[test]
fn missing_inputs_fail_cleanly() {
    let out = run(&["evaluate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no input files"));
}

#[test]
fn select_defaults_to_twenty() {
    let dir = TempDir::new().unwrap();
    let data = synthetic(&dir, 120, 30);
    let out = dir.path().join("sel");
    let count_selected = || {
        let csv = fs::read_to_string(out.join("ranking.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "feature_name,mi_nats,rank,selected");
        assert_eq!(csv.lines().count(), 31);
        csv.lines().filter(|l| l.ends_with(",true")).count()
    };
    ok(&["--out", p(&out), "select", "-i", p(&data)]);
    assert_eq!(count_selected(), 20);
    ok(&["--out", p(&out), "select", "-i", p(&data), "--k", "5"]);
    assert_eq!(count_selected(), 5);
}

#[test]
fn evaluate_writes_grid_and_predictions() {
    let dir = TempDir::new().unwrap();
    let data = synthetic(&dir, 120, 25);
    let out = dir.path().join("eval");
    let stdout = ok(&["--out", p(&out), "evaluate", "-i", p(&data), "--mode", "kfold"]);
    assert!(stdout.contains("train 84, test 36"), "{stdout}");
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
    for name in ["ols_all", "stacking_selected", "random_forest_selected"] {
        let series = fs::read_to_string(out.join("predictions").join(format!("{name}.csv"))).unwrap();
        assert_eq!(series.lines().next().unwrap(), "date,actual,predicted,split_label");
        assert_eq!(series.lines().filter(|l| l.ends_with(",test")).count(), 36);
    }
    assert!(out.join("report.txt").exists() && out.join("report.json").exists());
}

#[test]
fn train_then_forecast_matches_library() {
    let dir = TempDir::new().unwrap();
    let data = synthetic(&dir, 120, 12);
    let out = dir.path().join("model");
    ok(&["--out", p(&out), "train", "-i", p(&data), "--learner", "kernel_ridge"]);
    let model_file = out.join("model.json");
    ok(&["--out", p(&out), "forecast", "-i", p(&data), "--model-file", p(&model_file), "--horizon", "3"]);
    let csv = fs::read_to_string(out.join("forecast.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "date,spread_bps");
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("2010-01,") && rows[3].starts_with("2010-03,"));

    let model = TrainedPipeline::from_json(&fs::read_to_string(&model_file).unwrap()).unwrap();
    let ds = load_dataset(&data, "date", "spread").unwrap();
    let expected = forecast_next(&ds, &model, 3).unwrap();
    for (line, (month, value)) in rows[1..].iter().zip(&expected) {
        assert_eq!(*line, format!("{month},{value}"));
    }
}

#[test]
fn refit_reuses_saved_settings() {
    let dir = TempDir::new().unwrap();
    let data = synthetic(&dir, 120, 12);
    let out = dir.path().join("refit");
    ok(&["--out", p(&out), "train", "-i", p(&data), "--learner", "ols", "--no-selection", "--window", "2"]);
    let stdout = ok(&[
        "--out",
        p(&out),
        "forecast",
        "-i",
        p(&data),
        "--model-file",
        p(&out.join("model.json")),
        "--refit",
    ]);
    assert!(stdout.contains("2010-01"), "{stdout}");
    assert!(!run(&["forecast", "--refit", "-i", p(&data)]).status.success(), "--refit needs --model-file");
}

#[test]
fn incomplete_latest_row_is_reported() {
    let dir = TempDir::new().unwrap();
    let mut body = String::from("date,x,spread\n");
    for i in 0..40 {
        let month = format!("{}-{:02}", 2000 + i / 12, i % 12 + 1);
        let x = if i == 39 { String::new() } else { format!("{}", (i as f64 * 0.7).sin()) };
        body.push_str(&format!("{month},{x},{}\n", 100.0 + (i as f64 * 0.3).cos()));
    }
    let data = write(&dir, "gap.csv", &body);
    let out = run(&["--out", p(&dir.path().join("o")), "forecast", "-i", p(&data), "--learner", "ols", "--window", "2"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("2003-04") && err.contains('x'), "{err}");
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = TempDir::new().unwrap();
    let data = synthetic(&dir, 120, 30);
    let from_config = dir.path().join("from_config");
    let cfg = write(
        &dir,
        "run.toml",
        &format!("top_k = 7\nout = \"{}\"\n[data]\ninputs = [\"{}\"]\n", p(&from_config), p(&data)),
    );
    ok(&["--config", p(&cfg), "select"]);
    let from_file = fs::read_to_string(from_config.join("ranking.csv")).unwrap();
    assert_eq!(from_file.lines().filter(|l| l.ends_with(",true")).count(), 7);

    let out = dir.path().join("flags");
    ok(&["--config", p(&cfg), "--out", p(&out), "select", "--k", "3"]);
    let csv = fs::read_to_string(out.join("ranking.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.ends_with(",true")).count(), 3);

    let bad = write(&dir, "bad.toml", "top_kk = 3\n");
    assert!(!run(&["--config", p(&bad), "select"]).status.success());
}

#[test]
fn unknown_flag_and_help() {
    let out = run(&["evaluate", "--bogus"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus"));
    let help = ok(&["--help"]);
    for cmd in ["ingest", "select", "train", "evaluate", "forecast", "synth"] {
        assert!(help.contains(cmd), "{cmd} missing from help");
    }
}
