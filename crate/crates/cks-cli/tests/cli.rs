//! End-to-end checks of the `cks` binary: exit statuses, output formats
//! and reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn cks(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cks"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn verify_passes_and_emits_json() {
    let out = cks(&["verify", "--seed", "3", "--cases", "20"]);
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["pass"], serde_json::Value::Bool(true));
    assert_eq!(summary["ops"].as_array().unwrap().len(), 7);
}

#[test]
fn verify_zero_cases_is_an_empty_pass() {
    let out = cks(&["verify", "--cases", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(summary["ops"].as_array().unwrap().is_empty());
}

#[test]
fn verify_reports_injected_faults_with_a_geometry_dump() {
    let out = cks(&[
        "verify",
        "--seed",
        "3",
        "--cases",
        "4",
        "--inject-fault",
        "ks_deconv",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["pass"], serde_json::Value::Bool(false));
    let failed = summary["ops"]
        .as_array()
        .unwrap()
        .iter()
        .find(|o| o["op"] == "ks_deconv")
        .unwrap();
    assert!(failed["failure"]["geometry"]["ih"].as_u64().unwrap() >= 4);
}

#[test]
fn verify_is_reproducible() {
    let a = cks(&["verify", "--seed", "9", "--cases", "15"]);
    let b = cks(&["verify", "--seed", "9", "--cases", "15"]);
    assert_eq!(a.stdout, b.stdout);
}

fn write_small_geometry_file(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("cases.json");
    std::fs::write(
        &path,
        r#"[{"n":1,"ih":8,"iw":8,"ic":2,"oc":2,"fh":3,"fw":3,"sh":2,"sw":2,"ph":1,"pw":1},
           {"n":1,"ih":6,"iw":6,"ic":1,"oc":3,"fh":3,"fw":3,"sh":1,"sw":1,"ph":1,"pw":1}]"#,
    )
    .unwrap();
    path
}

#[test]
fn bench_custom_suite_single_rep() {
    let dir = std::env::temp_dir().join("cks-bench-custom");
    std::fs::create_dir_all(&dir).unwrap();
    let geometry = write_small_geometry_file(&dir);
    let out = cks(&[
        "bench",
        "--suite",
        "custom",
        "--geometry",
        geometry.to_str().unwrap(),
        "--reps",
        "1",
        "--deterministic",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("suite,case,op,implementation"));
    let rows: Vec<&str> = lines.collect();
    // strided case: 3 conv + 3 deconv + 4 dilated; unit-stride case: 3+2+4
    assert_eq!(rows.len(), 10 + 9);
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        let time: f64 = fields[19].parse().unwrap();
        assert!(time > 0.0 && time.is_finite(), "{row}");
    }
}

#[test]
fn bench_json_format_parses() {
    let dir = std::env::temp_dir().join("cks-bench-json");
    std::fs::create_dir_all(&dir).unwrap();
    let geometry = write_small_geometry_file(&dir);
    let out = cks(&[
        "bench",
        "--suite",
        "custom",
        "--geometry",
        geometry.to_str().unwrap(),
        "--reps",
        "1",
        "--op",
        "conv",
        "--dtype",
        "f64",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(!rows.as_array().unwrap().is_empty());
    assert_eq!(rows[0]["op"], "conv");
    assert_eq!(rows[0]["dtype"], "f64");
}

/// Strips the two timing-derived columns (mean_time_s, gflops).
fn stable_columns(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .map(|line| {
            line.split(',')
                .enumerate()
                .filter(|(i, _)| *i != 19 && *i != 22)
                .map(|(_, f)| f.to_string())
                .collect()
        })
        .collect()
}

#[test]
fn bench_counts_are_identical_across_runs_and_threads() {
    let dir = std::env::temp_dir().join("cks-bench-det");
    std::fs::create_dir_all(&dir).unwrap();
    let geometry = write_small_geometry_file(&dir);
    let run = |threads: &str| {
        let out = cks(&[
            "bench",
            "--suite",
            "custom",
            "--geometry",
            geometry.to_str().unwrap(),
            "--reps",
            "1",
            "--threads",
            threads,
            "--deterministic",
        ]);
        assert_eq!(out.status.code(), Some(0));
        stable_columns(&stdout(&out))
    };
    let first = run("1");
    let again = run("1");
    let wide = run("4");
    assert_eq!(first, again, "same flags must reproduce the same counts");
    assert_eq!(first, wide, "thread count must not change the counts");
}

#[test]
fn bench_custom_without_geometry_is_a_usage_error() {
    let out = cks(&["bench", "--suite", "custom"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_unknown_suite_is_a_usage_error() {
    let out = cks(&["bench", "--suite", "paper-9x9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_unwritable_output_is_an_io_error() {
    let dir = std::env::temp_dir().join("cks-bench-io");
    std::fs::create_dir_all(&dir).unwrap();
    let geometry = write_small_geometry_file(&dir);
    let out = cks(&[
        "bench",
        "--suite",
        "custom",
        "--geometry",
        geometry.to_str().unwrap(),
        "--reps",
        "1",
        "--op",
        "conv",
        "--out",
        "/nonexistent-dir/report.csv",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn analyze_curves_have_the_documented_trends() {
    let out = cks(&[
        "analyze",
        "--kind",
        "pad-fraction",
        "--range",
        "64:4",
        "--fixed",
        "p=1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let fractions: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(fractions.len(), 61);
    assert!(fractions.windows(2).all(|p| p[1] > p[0]));

    let out = cks(&["analyze", "--kind", "insert-fraction", "--range", "1:6"]);
    let text = stdout(&out);
    let fractions: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(fractions[0], 1.0);
    assert!(fractions.windows(2).all(|p| p[1] < p[0]));
}

#[test]
fn analyze_single_point_and_empty_range() {
    let out = cks(&["analyze", "--kind", "pad-fraction", "--range", "12:12"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).lines().count(), 2);

    let out = cks(&["analyze", "--kind", "pad-fraction", "--range", "0:0"]);
    assert_eq!(out.status.code(), Some(2));

    let out = cks(&[
        "analyze",
        "--kind",
        "pad-fraction",
        "--range",
        "4:8",
        "--fixed",
        "zz=3",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_emits_a_loss_trace() {
    let out = cks(&["train", "--steps", "30", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "step,loss");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4); // steps 0, 10, 20, 30
    assert!(rows[0].starts_with("0,"));
    assert!(rows[3].starts_with("30,"));
}
