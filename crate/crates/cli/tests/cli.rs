use std::path::Path;
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

const CONFIG: &str = r#"
seed = 7

[synth]
learners = 4
script = [
  { activity = "video", minutes = 2.0 },
  { activity = "reading", minutes = 2.0 },
]

[dataset]
groups = ["G1", "G2", "G3"]

[models.forest]
n_trees = 20

[models.mlp]
epochs = 20
"#;

fn gazeboard(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gazeboard"))
        .current_dir(dir)
        .args(["--store", "store", "--config", "cfg.toml"])
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = gazeboard(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(dir: &Path, args: &[&str]) -> Value {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    serde_json::from_str(&ok(dir, &all)).unwrap()
}

/// A store with every pipeline step already run.
fn prepared() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        std::fs::write(p.join("cfg.toml"), CONFIG).unwrap();
        for args in [
            &["synth", "--out", "raw"][..],
            &["ingest", "--dir", "raw"],
            &["tag"],
            &["features"],
            &["dataset"],
            &["train"],
        ] {
            ok(p, args);
        }
        dir
    })
    .path()
}

fn scratch() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), CONFIG).unwrap();
    dir
}

#[test]
fn features_store_one_session_profile_per_learner() {
    let v = json(prepared(), &["features"]);
    let whole: Vec<_> = v.as_array().unwrap().iter().filter(|p| p["scope"] == "whole_session").collect();
    assert_eq!(whole.len(), 4);
}

#[test]
fn anova_prints_f_df_and_p() {
    let text = ok(prepared(), &["anova", "--param", "avg_fixation_time", "--factor", "group"]);
    assert!(text.starts_with("avg_fixation_time by group (session): F(2, 1) = "), "{text}");
    assert!(text.contains(", p = "));
    let v = json(prepared(), &["anova", "--param", "avg_fixation_time", "--factor", "group"]);
    assert_eq!(v["test"]["df1"], 2);
    assert!(v["test"]["p_value"].as_f64().unwrap() <= 1.0);
}

#[test]
fn evaluate_prints_metric_table() {
    let text = ok(prepared(), &["evaluate", "--protocol", "split75_25", "--model", "rf"]);
    let rows: Vec<&str> = text.lines().map(str::trim_start).collect();
    assert!(rows[0].starts_with("Random Forest"));
    assert!(rows[1].starts_with("Accuracy test"));
    assert!(rows[2].starts_with("Video watching Precision"));
    assert!(rows[3].starts_with("Recall") && rows[4].starts_with("F1-Score"));
    assert!(rows[5].starts_with("Reading") && rows[5].contains("Precision"));
    let v = json(prepared(), &["evaluate", "--protocol", "split75_25", "--model", "all"]);
    assert_eq!(v["reports"].as_array().unwrap().len(), 2);
}

#[test]
fn heatmap_export_writes_grid_and_image() {
    let out = tempfile::tempdir().unwrap();
    let dir = out.path().to_str().unwrap();
    ok(prepared(), &["heatmap", "--activity", "reading", "--export", dir]);
    let grid = std::fs::read_to_string(out.path().join("P001.reading.grid")).unwrap();
    assert!(grid.starts_with("heatmap v1 96 54"));
    let pgm = std::fs::read(out.path().join("P001.reading.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5"));
}

#[test]
fn dataset_export_is_tab_separated() {
    let out = tempfile::tempdir().unwrap();
    let path = out.path().join("ds.tsv");
    ok(prepared(), &["dataset", "--export", path.to_str().unwrap()]);
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("participant_id\twindow_start_ms\tsex\tlabel"));
    assert!(text.lines().count() > 10);
}

#[test]
fn rerunning_a_step_leaves_the_store_unchanged() {
    let dir = scratch();
    let p = dir.path();
    for args in [&["synth", "--out", "raw"][..], &["ingest", "--dir", "raw"], &["tag"], &["features"]] {
        ok(p, args);
    }
    let snapshot = |p: &Path| {
        let store = gazeboard::store::Store::open(p.join("store")).unwrap();
        store.fingerprint().unwrap()
    };
    let before = snapshot(p);
    ok(p, &["tag"]);
    ok(p, &["features"]);
    ok(p, &["ingest", "--dir", "raw"]);
    assert_eq!(before, snapshot(p));
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = scratch();
    let p = dir.path();
    // Missing records are a data error.
    let out = gazeboard(p, &["tag"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: ") && err.trim_end().lines().count() == 1, "{err}");
    // Bad option values are configuration errors.
    assert_eq!(gazeboard(p, &["evaluate", "--protocol", "kfold"]).status.code(), Some(2));
    assert_eq!(gazeboard(p, &["anova", "--param", "blinks", "--factor", "sex"]).status.code(), Some(2));
    std::fs::write(p.join("cfg.toml"), "seed = \"seven\"").unwrap();
    assert_eq!(gazeboard(p, &["features"]).status.code(), Some(2));
    // Argument errors from the parser also exit with 2.
    assert_eq!(gazeboard(p, &["anova"]).status.code(), Some(2));
}

#[test]
fn ingest_accepts_explicit_files() {
    let dir = scratch();
    let p = dir.path();
    ok(p, &["synth", "--out", "raw", "--learners", "3"]);
    let v = json(p, &["ingest", "--meta", "raw/session_meta.tsv", "raw/P001.tsv", "raw/P002.tsv"]);
    assert_eq!(v["files"], 2);
    assert_eq!(v["excluded"], serde_json::json!(["P003"]));
}
