//! CLI surface: exit codes, error reporting, config handling.

use std::path::Path;
use std::process::{Command, Output};

fn tubekit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tubekit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn simulate_into(dir: &Path) -> (String, String) {
    let gt = dir.join("gt.jsonl").display().to_string();
    let dets = dir.join("dets.jsonl").display().to_string();
    let out = tubekit(&[
        "simulate", "--seed", "3", "--videos", "2", "--frames", "20", "--classes", "2",
        "--out-gt", &gt, "--out-stream", &dets,
    ]);
    assert!(out.status.success());
    (gt, dets)
}

#[test]
fn success_paths_exit_zero_with_summary() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, dets) = simulate_into(dir.path());
    let tubes = dir.path().join("tubes.jsonl").display().to_string();
    let csv = dir.path().join("map.csv").display().to_string();

    let out = tubekit(&["build-online", "--input", &dets, "--out", &tubes]);
    assert!(out.status.success());

    let out = tubekit(&["eval", "map", "--gt", &gt, "--tubes", &tubes, "--out-csv", &csv]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let summary: Vec<&str> = stdout.lines().collect();
    assert_eq!(summary.len(), 1, "exactly one summary line: {stdout}");
    assert!(summary[0].starts_with("metric=map"));
    assert!(summary[0].contains("value="));
    let csv_text = std::fs::read_to_string(&csv).unwrap();
    assert!(csv_text.starts_with("class,ap"));
}

#[test]
fn malformed_record_fails_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        concat!(
            r#"{"video":"v","t":0,"w":10,"h":10,"dets":[]}"#,
            "\n",
            r#"{"video":"v","t":1,"w":10,"h":10,"dets":[{"box":[9,0,1,1],"scores":[0.1,0.9]}]}"#,
            "\n",
        ),
    )
    .unwrap();
    let out_path = dir.path().join("tubes.jsonl").display().to_string();
    let out = tubekit(&["build-online", "--input", &bad.display().to_string(), "--out", &out_path]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(":2:"), "line number missing: {stderr}");
    assert!(stderr.contains("invalid box"), "{stderr}");
}

#[test]
fn missing_file_fails_cleanly() {
    let out = tubekit(&["build-online", "--input", "/nonexistent.jsonl", "--out", "/tmp/x.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gt_class_out_of_range_rejected_on_simulated_config() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.jsonl");
    std::fs::write(
        &gt,
        r#"{"video":"v","class":0,"start":0,"end":0,"boxes":[[0,0,1,1]]}"#,
    )
    .unwrap();
    let csv = dir.path().join("x.csv").display().to_string();
    let out = tubekit(&[
        "eval", "map", "--gt", &gt.display().to_string(), "--tubes", &gt.display().to_string(),
        "--out-csv", &csv,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("class ids start at 1"));
}

#[test]
fn config_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"scenario": {"videos": 3, "frames": 12, "classes": 2}}"#,
    )
    .unwrap();
    let gt = dir.path().join("gt.jsonl").display().to_string();
    let dets = dir.path().join("dets.jsonl").display().to_string();
    let out = tubekit(&[
        "--config", &cfg.display().to_string(),
        "simulate", "--seed", "1", "--out-gt", &gt, "--out-stream", &dets,
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("videos=3 frames=12 classes=2"), "{stdout}");
}

#[test]
fn config_env_var_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"scenario": {"videos": 4}}"#).unwrap();
    let gt = dir.path().join("gt.jsonl").display().to_string();
    let dets = dir.path().join("dets.jsonl").display().to_string();
    let out = Command::new(env!("CARGO_BIN_EXE_tubekit"))
        .env("TUBEKIT_CONFIG", cfg.as_os_str())
        .args(["simulate", "--seed", "1", "--out-gt", &gt, "--out-stream", &dets])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("videos=4"));
}

#[test]
fn invalid_config_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"online": {"iou_gate": 2.0}}"#).unwrap();
    let out = tubekit(&[
        "--config", &cfg.display().to_string(),
        "bench", "--frames", "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("iou_gate"));
    // unknown keys are schema violations too
    std::fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    let out = tubekit(&[
        "--config", &cfg.display().to_string(),
        "bench", "--frames", "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fused_scores_above_one_flow_back_in() {
    // boost fusion can push scores past 1 pre-normalisation; the builders
    // must accept their own fused output
    let dir = tempfile::tempdir().unwrap();
    let (_gt, dets) = simulate_into(dir.path());
    let fused = dir.path().join("fused.jsonl").display().to_string();
    let tubes = dir.path().join("tubes.jsonl").display().to_string();
    let out = tubekit(&["fuse", "--appearance", &dets, "--flow", &dets, "--strategy", "boost",
                        "--out", &fused]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&fused).unwrap();
    assert!(text.contains("2.0"), "expected boosted score above 1");
    let out = tubekit(&["build-online", "--input", &fused, "--out", &tubes]);
    assert!(out.status.success());
}

#[test]
fn predict_future_validates_fraction() {
    let out = tubekit(&[
        "predict-future", "--input", "/dev/null", "--fraction", "0", "--width", "10",
        "--height", "10", "--out", "/tmp/x.jsonl",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn flow_only_frames_rejected_by_fuse() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let f = dir.path().join("f.jsonl");
    std::fs::write(&a, r#"{"video":"v","t":0,"w":10,"h":10,"dets":[]}"#).unwrap();
    std::fs::write(
        &f,
        concat!(
            r#"{"video":"v","t":0,"w":10,"h":10,"dets":[]}"#,
            "\n",
            r#"{"video":"v","t":1,"w":10,"h":10,"dets":[]}"#,
            "\n",
        ),
    )
    .unwrap();
    let out = tubekit(&[
        "fuse", "--appearance", &a.display().to_string(), "--flow", &f.display().to_string(),
        "--out", &dir.path().join("o.jsonl").display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing from the appearance stream"));
}
