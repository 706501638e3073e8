use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_otafl");

const SMALL: [&str; 8] = [
    "--set",
    "M=4",
    "--set",
    "T=5",
    "--set",
    "samples_per_device=50",
    "--set",
    "test_samples=100",
];

fn otafl(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["run", "--seed", "9"];
    args.extend(SMALL);
    let o = otafl(&args, &out);
    ok(&o);
    for f in [
        "records.jsonl",
        "summary.csv",
        "diagnostics.json",
        "config.toml",
        "geometry.json",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let records = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 5);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("t,N_t,alpha,error_sq,loss,accuracy,cumulative_energy"));
    let cfg = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(cfg.contains("seed = 9"));
}

#[test]
fn emitted_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let mut args = vec!["run"];
    args.extend(SMALL);
    ok(&otafl(&args, &first));
    let cfg = first.join("config.toml");
    let second = dir.path().join("b");
    ok(&otafl(&["run", "--config", cfg.to_str().unwrap()], &second));
    assert_eq!(
        std::fs::read(first.join("records.jsonl")).unwrap(),
        std::fs::read(second.join("records.jsonl")).unwrap()
    );
}

#[test]
fn sweep_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let mut args = vec!["sweep", "--axis", "P_in", "--values", "off;50 dBm"];
    args.extend(SMALL);
    ok(&otafl(&args, &out));
    let merged = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(merged.lines().count(), 1 + 2 * 5);

    let runs: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    assert_eq!(runs.len(), 2);
    let csv = dir.path().join("report.csv");
    let o = Command::new(BIN)
        .arg("report")
        .args(&runs)
        .args(["--target", "0.99", "--csv"])
        .arg(&csv)
        .output()
        .unwrap();
    ok(&o);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("P_in"), "{text}");
    assert!(csv.exists());
}

#[test]
fn bad_input_exits_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let o = otafl(&["run", "--set", "delta_m=2"], &dir.path().join("x"));
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let o = otafl(
        &["sweep", "--axis", "colour", "--values", "1"],
        &dir.path().join("y"),
    );
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("P_in"));
}
