//! Drives the `offlang` binary through every subcommand on a small generated
//! corpus.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use offlang::synthetic::{self, SyntheticConfig};

fn offlang(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_offlang"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = offlang(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = offlang(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    data: PathBuf,
    config: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let data = root.join("tweets.tsv");
    let records = synthetic::generate(&SyntheticConfig { n: 400, seed: 3, ..Default::default() }).unwrap();
    synthetic::write_olid(&records, fs::File::create(&data).unwrap()).unwrap();
    let config = root.join("run.json");
    let json = serde_json::json!({
        "data": { "train_path": data, "test_path": data, "task": "A", "seed": 1 },
        "embeddings": { "dim": 8, "buckets": 2000, "epochs": 1 },
        "model": { "seq_len": 16, "lstm_hidden": 6, "conv_filters": 6, "max_epochs": 2, "batch_size": 16 },
        "output": { "dir": root.join("out") }
    });
    fs::write(&config, serde_json::to_string_pretty(&json).unwrap()).unwrap();
    Fixture { _dir: dir, root, data, config }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn every_subcommand_runs() {
    let f = fixture();
    let cfg = s(&f.config);
    let out = f.root.join("out");

    let stdout = ok(&["--config", cfg, "preprocess"]);
    assert!(stdout.contains("cleaned 400 tweets"));
    assert!(out.join("clean.tsv").exists() && out.join("vocab.txt").exists());
    assert!(out.join("run.json").exists());

    ok(&["--config", cfg, "stats"]);
    assert!(out.join("user_counts.tsv").exists());

    let stdout = ok(&["--config", cfg, "resample-report", "--p-u", "0"]);
    assert!(stdout.contains("p_u = 0"));
    assert!(out.join("resample_report.tsv").exists());

    ok(&["--config", cfg, "embed-train"]);
    assert!(out.join("vectors.txt").exists());

    ok(&["--config", cfg, "train"]);
    let model = out.join("model.oflg");
    assert!(model.exists() && out.join("history.csv").exists());
    let record: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(record["command"], "train");

    let pred_dir = f.root.join("pred");
    ok(&["--config", cfg, "--out", s(&pred_dir), "predict", "--model", s(&model)]);
    let preds = fs::read_to_string(pred_dir.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().next(), Some("id,label"));
    assert_eq!(preds.lines().count(), 401);

    let eval_dir = f.root.join("eval");
    ok(&["--config", cfg, "--out", s(&eval_dir), "evaluate", "--model", s(&model)]);
    assert!(eval_dir.join("metrics.csv").exists());

    let c_dir = f.root.join("task_c");
    ok(&["--config", cfg, "--task", "c", "--out", s(&c_dir), "transfer", "--model", s(&model), "--vocab", s(&out.join("vocab.txt"))]);
    assert!(c_dir.join("model.oflg").exists());

    let msg = fails(&["--config", cfg, "--task", "b", "--out", s(&f.root.join("bad")), "transfer", "--model", s(&c_dir.join("model.oflg"))]);
    assert!(msg.contains("task-A"), "{msg}");

    ok(&["--config", cfg, "tune-pu", "--folds", "3", "--trees", "5"]);
    let pu = fs::read_to_string(out.join("pu_report.csv")).unwrap();
    assert!(pu.starts_with("p_u,fold_1,fold_2,fold_3,mean_macro_f1"));

    ok(&["--config", cfg, "tune-hparams", "--n-init", "2", "--n-iter", "1"]);
    let trace = fs::read_to_string(out.join("bo_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 4);

    let stdout = ok(&["--config", cfg, "gradcheck", "--seeds", "1"]);
    assert!(stdout.contains("0 failed"), "{stdout}");
}

#[test]
fn vocabulary_mismatch_is_rejected() {
    let f = fixture();
    let cfg = s(&f.config);
    ok(&["--config", cfg, "train"]);
    let other = f.root.join("other_vocab.txt");
    fs::write(&other, "<pad>\n<unk>\nsomething\n").unwrap();
    let msg = fails(&["--config", cfg, "--out", s(&f.root.join("p")), "predict", "--model", s(&f.root.join("out/model.oflg")), "--vocab", s(&other)]);
    assert!(msg.to_lowercase().contains("vocab"), "{msg}");
}

#[test]
fn missing_key_and_unknown_key_errors() {
    let f = fixture();
    let msg = fails(&["--out", s(&f.root.join("x")), "train"]);
    assert!(msg.contains("missing config key `data.train_path`"), "{msg}");

    let bad = f.root.join("bad.json");
    fs::write(&bad, r#"{"model": {"hidden": 3}}"#).unwrap();
    let msg = fails(&["--config", s(&bad), "gradcheck", "--seeds", "1"]);
    assert!(msg.contains("hidden"), "{msg}");

    let msg = fails(&["--config", s(&f.config), "predict", "--model", s(&f.root.join("nope.oflg")), "--input", s(&f.data)]);
    assert!(msg.contains("vocab.txt") && msg.contains("No such file"), "{msg}");
}
