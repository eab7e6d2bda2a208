use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lstmica::recording::{read_recording, write_recording};
use lstmica_cli::commands::evaluate::EvaluationSummary;
use lstmica_cli::commands::train::{Split, TrainSummary};
use serde_json::Value;
use tempfile::TempDir;

fn lstmica(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lstmica"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = lstmica(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Error record printed as the last stderr line.
fn error_json(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let last = stderr.lines().last().expect("stderr is not empty");
    serde_json::from_str(last).unwrap_or_else(|_| panic!("not JSON: {last}"))
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    for rec in r.records() {
        rows.push(rec.unwrap().iter().map(String::from).collect());
    }
    rows
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

const TINY_TRAIN: &str = "[train]
epochs = 3
batch_size = 6
segment_len = 40
batches_per_epoch = 2
hidden = 6
test_fraction = 0.3
validation_fraction = 0.3
";

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.toml");
    fs::write(&path, TINY_TRAIN).unwrap();
    path
}

fn simulate(dir: &Path, subjects: &str) -> PathBuf {
    let data = dir.join("data");
    ok(&["simulate", "--quiet", "--seed", "5", "--subjects", subjects, "--duration", "4", "--out", p(&data)]);
    data
}

#[test]
fn simulate_is_deterministic_and_writes_every_subject() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        ok(&["simulate", "--quiet", "--seed", "11", "--subjects", "3", "--duration", "3", "--out", p(d)]);
    }
    let files = files_under(&a);
    assert_eq!(files, files_under(&b));
    // config.toml echoes the (different) output path
    for f in files.iter().filter(|f| !f.ends_with("config.toml")) {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f:?} differs");
    }
    let manifest = read_csv(&a.join("manifest.csv"));
    assert_eq!(manifest.len(), 4);
    for s in ["S01", "S02", "S03"] {
        let rec = read_recording(&a.join(s).join("contaminated.csv")).unwrap();
        assert_eq!(rec.n_channels(), 19);
        assert_eq!(rec.n_samples(), 600);
        let pure = read_recording(&a.join(s).join("pure.csv")).unwrap();
        assert_eq!(pure.n_channels(), 19);
    }
}

#[test]
fn simulated_files_satisfy_the_contamination_model() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), "2");
    let manifest = read_csv(&data.join("manifest.csv"));
    let col = |name: &str| manifest[0].iter().position(|h| h == name).unwrap();
    for row in &manifest[1..] {
        let dir = data.join(&row[col("subject")]);
        let a: f64 = row[col("a")].parse().unwrap();
        let b: f64 = row[col("b")].parse().unwrap();
        let cont = read_recording(&dir.join("contaminated.csv")).unwrap();
        let pure = read_recording(&dir.join("pure.csv")).unwrap();
        let eog = read_recording(&dir.join("eog.csv")).unwrap();
        for c in 0..pure.n_channels() {
            for t in 0..pure.n_samples() {
                let expect = pure.data[[c, t]] + a * eog.data[[0, t]] + b * eog.data[[1, t]];
                assert!((cont.data[[c, t]] - expect).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn zero_subjects_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = lstmica(&["simulate", "--subjects", "0", "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "usage");
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[train]\nepoch = 3\n").unwrap();
    let out = lstmica(&["--config", p(&cfg), "simulate", "--out", p(&tmp.path().join("d"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_json(&out);
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("epoch"));
}

#[test]
fn missing_model_is_reported() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), "1");
    let out = lstmica(&[
        "clean",
        "--model",
        p(&tmp.path().join("nothing")),
        "--data",
        p(&data),
        "--out",
        p(&tmp.path().join("c")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"], "missing_input");
}

#[test]
fn evaluating_the_ground_truth_gives_zero_error() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), "2");
    let cleaned = tmp.path().join("perfect");
    for s in ["S01", "S02"] {
        let pure = read_recording(&data.join(s).join("pure.csv")).unwrap();
        fs::create_dir_all(cleaned.join(s)).unwrap();
        write_recording(&cleaned.join(s).join("cleaned.csv"), &pure.with_subject(s)).unwrap();
    }
    let eval = tmp.path().join("eval");
    ok(&["evaluate", "--quiet", "--cleaned", p(&cleaned), "--data", p(&data), "--out", p(&eval)]);
    let summary: EvaluationSummary =
        serde_json::from_str(&fs::read_to_string(eval.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.subjects, ["S01", "S02"]);
    for agg in [summary.cleaned_normalized, summary.cleaned_physical] {
        assert_eq!(agg.mse.mean, 0.0);
        assert_eq!(agg.mae.mean, 0.0);
        assert_eq!(agg.me.mean, 0.0);
    }
    assert!(summary.contaminated_normalized.mse.mean > 0.0);
}

#[test]
fn pipeline_runs_end_to_end_on_a_tiny_model() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), "5");
    let cfg = tiny_config(tmp.path());
    let model = tmp.path().join("model");
    ok(&["--config", p(&cfg), "--quiet", "train", "--data", p(&data), "--out", p(&model)]);

    let split: Split = serde_json::from_str(&fs::read_to_string(model.join("split.json")).unwrap()).unwrap();
    let mut all: Vec<_> = [&split.train, &split.validation, &split.test]
        .into_iter()
        .flatten()
        .cloned()
        .collect();
    all.sort();
    assert_eq!(all, ["S01", "S02", "S03", "S04", "S05"]);
    assert!(!split.test.is_empty());

    let summary: TrainSummary =
        serde_json::from_str(&fs::read_to_string(model.join("train_summary.json")).unwrap()).unwrap();
    let history = read_csv(&model.join("history.csv"));
    assert_eq!(history.len() - 1, summary.epochs_run);
    let vals: Vec<f64> = history[1..].iter().map(|r| r[2].parse().unwrap()).collect();
    let best = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i + 1)
        .unwrap();
    assert_eq!(best, summary.best_epoch);
    assert_eq!(vals[best - 1], summary.best_val_loss);

    let cleaned = tmp.path().join("cleaned");
    ok(&["--config", p(&cfg), "--quiet", "clean", "--model", p(&model), "--data", p(&data), "--out", p(&cleaned)]);
    for s in &split.test {
        assert!(cleaned.join(s).join("cleaned.csv").exists());
        assert!(cleaned.join(s).join("removal_report.json").exists());
    }

    let eval = tmp.path().join("eval");
    ok(&["--quiet", "evaluate", "--cleaned", p(&cleaned), "--data", p(&data), "--out", p(&eval)]);
    let table = read_csv(&eval.join("channel_metrics.csv"));
    assert_eq!(table.len() - 1, 19);
    let summary: EvaluationSummary =
        serde_json::from_str(&fs::read_to_string(eval.join("summary.json")).unwrap()).unwrap();
    let mse_col = table[0].iter().position(|h| h == "mse").unwrap();
    let column_mean = table[1..]
        .iter()
        .map(|r| r[mse_col].parse::<f64>().unwrap())
        .sum::<f64>()
        / 19.0;
    assert!((column_mean - summary.cleaned_normalized.mse.mean).abs() < 1e-12);
    assert!(eval.join("eog_errors.csv").exists());
    assert!(eval.join("plots").join("plot_manifest.json").exists());
}

#[test]
fn threshold_above_one_leaves_the_recording_unchanged() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), "4");
    let cfg = tiny_config(tmp.path());
    let model = tmp.path().join("model");
    ok(&["--config", p(&cfg), "--quiet", "train", "--data", p(&data), "--out", p(&model)]);
    let input = data.join("S01").join("contaminated.csv");
    let out = tmp.path().join("noop");
    ok(&["--quiet", "clean", "--model", p(&model), "--input", p(&input), "--threshold", "1.01", "--out", p(&out)]);
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("removal_report.json")).unwrap()).unwrap();
    assert_eq!(report["removed_source_ids"].as_array().unwrap().len(), 0);
    let cleaned = read_recording(&out.join("cleaned.csv")).unwrap();
    let original = read_recording(&input).unwrap();
    assert_eq!(cleaned.n_channels(), 19);
    let max_diff = cleaned
        .data
        .iter()
        .zip(original.data.iter())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(max_diff < 1e-6, "max diff {max_diff}");
}

#[test]
fn single_channel_model_cleans_one_channel() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), "4");
    let cfg = tiny_config(tmp.path());
    let model = tmp.path().join("model");
    ok(&["--config", p(&cfg), "--quiet", "train", "--data", p(&data), "--single-channel", "FP1", "--out", p(&model)]);
    let out = tmp.path().join("fp1");
    ok(&[
        "--quiet",
        "clean",
        "--model",
        p(&model),
        "--input",
        p(&data.join("S02").join("contaminated.csv")),
        "--single-channel",
        "FP1",
        "--out",
        p(&out),
    ]);
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("removal_report.json")).unwrap()).unwrap();
    assert_eq!(report["n_sources"], 3);
    let cleaned = read_recording(&out.join("cleaned.csv")).unwrap();
    assert_eq!(cleaned.labels, ["FP1"]);

    let mismatch = lstmica(&[
        "clean",
        "--model",
        p(&model),
        "--input",
        p(&data.join("S02").join("contaminated.csv")),
        "--out",
        p(&tmp.path().join("all")),
    ]);
    assert_eq!(mismatch.status.code(), Some(1));
}
