use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const REFERENCE: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../scenarios/reference.json"
);

fn ptcbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptcbf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_trajectory_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = ptcbf(&[
        "simulate",
        "--scenario",
        REFERENCE,
        "--out",
        arg(dir.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "t,x1,x2,u,u_nom,safe_bound,h1,h2,override,mu_clipped"
    );
    assert_eq!(csv.lines().count(), 6002);
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap())
            .unwrap();
    assert!(metrics["metrics"]["min_y_margin"].as_f64().unwrap() < 0.0);
    assert_eq!(metrics["gains"], serde_json::json!([0.6, 0.6]));
}

#[test]
fn scenario_lists_get_one_directory_each() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("list.json");
    fs::write(
        &file,
        r#"{"scenarios": [
            {"name": "slow", "x0": [-4, 2], "T": 4, "nominal": {"kind": "constant", "value": 1}, "dt": 0.01},
            {"name": "fast", "x0": [-1, 0, 0], "T": 1, "nominal": {"kind": "constant", "value": 5}, "dt": 0.001}
        ]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("runs");
    let out = ptcbf(&["simulate", "--scenario", arg(&file), "--out", arg(&out_dir)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in ["slow", "fast"] {
        assert!(out_dir.join(name).join("trajectory.csv").exists());
        assert!(out_dir.join(name).join("metrics.json").exists());
    }
    let header = fs::read_to_string(out_dir.join("fast/trajectory.csv")).unwrap();
    assert!(header.starts_with("t,x1,x2,x3,u,u_nom,safe_bound,h1,h2,h3,override,mu_clipped\n"));
}

#[test]
fn compare_writes_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = ptcbf(&[
        "compare",
        "--scenario",
        REFERENCE,
        "--filters",
        "ptsf,esf:0.6,esf:3.2",
        "--out",
        arg(dir.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    let labels: Vec<&str> = manifest["variants"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["label"].as_str().unwrap())
        .collect();
    assert_eq!(labels.len(), 3);
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 4);

    let bad = ptcbf(&[
        "compare",
        "--scenario",
        REFERENCE,
        "--filters",
        "ptsf,esf:-1",
        "--out",
        arg(dir.path()),
    ]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn gains_prints_bounds_and_selection() {
    let out = ptcbf(&["gains", "--scenario", REFERENCE]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let stage1 = text
        .lines()
        .find(|l| l.trim_start().starts_with("1 "))
        .unwrap();
    let fields: Vec<f64> = stage1
        .split_whitespace()
        .skip(1)
        .map(|f| f.parse().unwrap())
        .collect();
    assert!(
        (fields[0] - 0.5).abs() < 1e-12 && (fields[1] - 0.6).abs() < 1e-12,
        "{stage1}"
    );
}

#[test]
fn exit_codes_separate_validation_runtime_and_verification() {
    let dir = tempfile::tempdir().unwrap();
    let unsafe_doc = dir.path().join("unsafe.json");
    fs::write(
        &unsafe_doc,
        r#"{"x0": [1, 0], "T": 4, "nominal": "tracking_sine"}"#,
    )
    .unwrap();
    let out = ptcbf(&[
        "simulate",
        "--scenario",
        arg(&unsafe_doc),
        "--out",
        arg(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("x0[0]"));

    // auto gains on this fourth-order state explode and exceed a tiny substep cap
    let stiff = dir.path().join("stiff.json");
    fs::write(
        &stiff,
        r#"{"x0": [-1, 0, 0, 0], "T": 1, "nominal": {"kind": "constant", "value": 1}, "max_substeps": 1}"#,
    )
    .unwrap();
    let out = ptcbf(&[
        "simulate",
        "--scenario",
        arg(&stiff),
        "--out",
        arg(dir.path()),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = ptcbf(&["verify", "--suite", "kernel"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("0 failed"));
}
