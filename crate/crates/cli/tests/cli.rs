//! End-to-end runs of the `hids` binary.

use std::path::Path;
use std::process::{Command, Output};

fn hids(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hids"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const QUICK: &str = "preset = quick\nsignature.tune = false\nsignature.max_estimators = 10\nkpca.tune = false\n\
kpca.p = 4\nanomaly.k_max = 16\nanomaly.budget = 3\nanomaly.tune_p_star = false\nbench.rows = 200\n\
bench.warmup = 5\n";

const CAN: [&str; 8] = [
    "--can",
    "DoS=can/DoS_dataset.csv",
    "--can",
    "Fuzzy=can/Fuzzy_dataset.csv",
    "--can",
    "Gear=can/Gear_dataset.csv",
    "--can",
    "RPM=can/RPM_dataset.csv",
];

fn with_can<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(CAN.iter()).chain(tail).copied().collect()
}

#[test]
fn train_detect_and_inspect_on_synthetic_can() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("q.conf"), QUICK).unwrap();
    assert!(hids(d, &["synth", "can", "--rows", "4000", "--out", "can"]).status.success());

    let o = hids(d, &with_can(&["ingest"], &["--out", "all.csv"]));
    assert!(o.status.success());
    assert!(stdout(&o).contains("4000 rows, 10 features"));

    let o = hids(d, &with_can(&["--config", "q.conf", "train"], &["--model", "m.hids", "--holdout", "--report", "r.csv"]));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("signature tier only"));
    assert!(std::fs::read_to_string(d.join("r.csv")).unwrap().starts_with("metric,value"));

    let o = hids(d, &["detect", "--model", "m.hids", "--input", "all.csv", "--out", "v.csv"]);
    assert!(o.status.success());
    let verdicts = std::fs::read_to_string(d.join("v.csv")).unwrap();
    let mut lines = verdicts.lines();
    assert_eq!(lines.next(), Some("index,kind,class,confidence,tiers"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4000);
    for (i, line) in rows.iter().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[0], i.to_string());
        match cells[1] {
            "known" => assert!(["DoS", "Fuzzy", "Gear", "RPM"].contains(&cells[2]) && cells[4] == "1"),
            "unknown" | "normal" => assert!(cells[2] == "-" && (cells[4] == "1-3" || cells[4] == "1-3-4")),
            other => panic!("kind {other}"),
        }
    }

    let o = hids(d, &["inspect", "--model", "m.hids"]);
    assert!(stdout(&o).contains("format version 1"));

    let o = hids(d, &with_can(&["--config", "q.conf", "bench", "--model", "m.hids"], &["--report", "b.csv"]));
    assert!(o.status.success());
    assert!(stdout(&o).contains("total"));
}

#[test]
fn exit_codes_follow_error_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(hids(d, &["frobnicate"]).status.code(), Some(1));
    std::fs::write(d.join("bad.conf"), "smote.nope = 1\n").unwrap();
    assert_eq!(hids(d, &["--config", "bad.conf", "inspect", "--model", "x"]).status.code(), Some(1));
    assert_eq!(hids(d, &["inspect", "--model", "missing.hids"]).status.code(), Some(2));
    std::fs::write(d.join("junk.hids"), b"HIDSPIPE\x09\x00\x00\x00").unwrap();
    let o = hids(d, &["inspect", "--model", "junk.hids"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains('9'));
    assert_eq!(hids(d, &["--help"]).status.code(), Some(0));
}

#[test]
fn zero_day_reports_each_attack() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("q.conf"), QUICK).unwrap();
    assert!(hids(d, &["synth", "can", "--rows", "3000", "--out", "can"]).status.success());
    let o = hids(d, &with_can(&["--config", "q.conf", "zeroDay"], &["--attack", "DoS", "--report", "z.csv"]));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.join("z.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("DoS,"));
    let o = hids(d, &with_can(&["--config", "q.conf", "zeroDay"], &["--attack", "Nope"]));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn flow_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(hids(d, &["synth", "flows", "--rows", "1500", "--min-per-class", "4", "--out", "f.csv"]).status.success());
    let o = hids(d, &["ingest", "--flows", "f.csv", "--out", "clean.csv"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("BENIGN"));
    let o = hids(d, &["--seed", "3", "sample", "--flows", "clean.csv", "--out", "s.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("k = "));
}
