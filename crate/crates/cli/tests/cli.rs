use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn locap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_locap"))
        .args(args)
        .output()
        .unwrap()
}

fn json_of(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn path(p: &PathBuf) -> &str {
    p.to_str().unwrap()
}

#[test]
fn classify_table1() {
    let doc = json_of(&locap(&["classify", path(&fixture("table1.json"))]));
    assert_eq!(doc["result"]["degraded"], true);
    assert_eq!(doc["result"]["rank_symmetric"], false);
    assert_eq!(doc["input_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(doc["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn classify_table2_and_zero() {
    let doc = json_of(&locap(&["classify", path(&fixture("table2.json"))]));
    assert_eq!(doc["result"]["unique_subspace_degradation"], false);
    let doc = json_of(&locap(&["classify", path(&fixture("zero.json"))]));
    for flag in [
        "row_space_symmetric",
        "unique_subspace_degradation",
        "degraded",
        "rank_symmetric",
        "uniform_given_rank",
    ] {
        assert_eq!(doc["result"][flag], true, "{flag}");
    }
}

#[test]
fn report_table2() {
    let doc = json_of(&locap(&["report", path(&fixture("table2.json"))]));
    let r = &doc["result"];
    assert!((r["capacity"]["value"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!((r["css"]["value"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(r["verdict"], "C_EQUALS_CSS");
}

#[test]
fn report_example6_exceeds() {
    let doc = json_of(&locap(&["report", path(&fixture("example6.json"))]));
    assert_eq!(doc["result"]["verdict"], "C_EXCEEDS_CSS");
}

#[test]
fn capacity_of_zero_channel() {
    let doc = json_of(&locap(&["capacity", path(&fixture("zero.json"))]));
    assert_eq!(doc["result"]["value"].as_f64().unwrap(), 0.0);
}

#[test]
fn bruteforce_lists_three_z_channels() {
    let doc = json_of(&locap(&[
        "css",
        "--mode",
        "bruteforce",
        path(&fixture("table2.json")),
    ]));
    let options = doc["result"]["options"].as_array().unwrap();
    let line = options
        .iter()
        .find(|o| o["column_space"]["basis"].as_array().unwrap().len() == 1)
        .unwrap();
    let choices = line["choices"].as_array().unwrap();
    assert_eq!(choices.len(), 3);
    for c in choices {
        // Two output column spaces at most: a binary Z-channel.
        assert!(c["row"].as_array().unwrap().len() <= 2);
    }
}

#[test]
fn unique_mode_refuses_table2() {
    let out = locap(&["css", "--mode", "unique", path(&fixture("table2.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("brute-force"));
}

#[test]
fn csv_columns() {
    let out = locap(&["report", "--format", "csv", path(&fixture("table1.json"))]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("quantity,value,mode,gap"));
    assert!(lines.any(|l| l.starts_with("C_SS,") && l.contains("unique_sd_convex")));
}

#[test]
fn bounds_sandwich() {
    let doc = json_of(&locap(&["bounds", path(&fixture("table1.json"))]));
    for at in ["uniform", "achiever"] {
        let b = &doc["result"][at];
        let (lo, mi, hi) = (
            b["lower"].as_f64().unwrap(),
            b["mi"].as_f64().unwrap(),
            b["upper"].as_f64().unwrap(),
        );
        assert!(lo <= mi + 1e-9 && mi <= hi + 1e-9);
    }
}

#[test]
fn gen_families() {
    let spec = |args: &[&str]| -> Value { json_of(&locap(args)) };
    let iid = spec(&["gen", "iid-uniform", "--q", "2", "--M", "1", "--N", "1"]);
    assert_eq!(iid["pmf"].as_array().unwrap().len(), 2);
    let full = spec(&["gen", "full-rank-uniform", "--q", "2", "--M", "2"]);
    let entries = full["pmf"].as_array().unwrap();
    assert_eq!(entries.len(), 6);
    assert!(entries.iter().all(|e| e["p"] == "1/6"));
    let ugr = spec(&[
        "gen",
        "uniform-given-rank",
        "--q",
        "2",
        "--M",
        "2",
        "--rank-pmf",
        "1:1",
    ]);
    let entries = ugr["pmf"].as_array().unwrap();
    assert_eq!(entries.len(), 9);
    assert!(entries.iter().all(|e| e["p"] == "1/9"));
}

#[test]
fn gen_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.json");
    let out = locap(&[
        "gen",
        "custom-rank-dist",
        "--q",
        "2",
        "--T",
        "2",
        "--M",
        "2",
        "--rank-pmf",
        "0:1/2,2:1/2",
        "--seed",
        "4",
        "--out",
        path(&file),
    ]);
    assert!(out.status.success());
    let doc = json_of(&locap(&["classify", path(&file)]));
    assert!(doc["result"]["rank_symmetric"].is_boolean());
}

#[test]
fn gen_rejects_bad_params() {
    assert_eq!(
        locap(&["gen", "full-rank-uniform", "--q", "4", "--M", "2"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        locap(&["gen", "uniform-given-rank", "--q", "2", "--M", "2"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        locap(&[
            "gen",
            "uniform-given-rank",
            "--q",
            "2",
            "--M",
            "2",
            "--rank-pmf",
            "1:1/2"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn corrupted_pmf_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.json");
    std::fs::write(
        &file,
        r#"{"q":2,"T":1,"M":1,"N":1,"pmf":[{"H":[[1]],"p":"1/2"}]}"#,
    )
    .unwrap();
    let out = locap(&["classify", path(&file)]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&file, "{ not json").unwrap();
    assert_eq!(locap(&["report", path(&file)]).status.code(), Some(2));
}

#[test]
fn budget_exit_code() {
    let out = locap(&["report", "--budget", "2", path(&fixture("table1.json"))]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn non_convergence_exit_code_keeps_partial_result() {
    let out = locap(&[
        "capacity",
        "--max-iter",
        "1",
        "--tol",
        "1e-15",
        path(&fixture("table1.json")),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["result"]["converged"], false);
    assert!(doc["result"]["gap"].as_f64().unwrap() > 0.0);
}

#[test]
fn verify_is_reproducible_and_independent_of_jobs() {
    let a = locap(&[
        "verify",
        "--seed",
        "3",
        "--channels",
        "10",
        "--audit",
        "50",
        "--jobs",
        "1",
    ]);
    let b = locap(&["verify", "--seed", "3", "--channels", "10", "--audit", "50"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("r.json");
    let out = locap(&[
        "capacity",
        "--out",
        path(&file),
        path(&fixture("table1.json")),
    ]);
    assert!(out.status.success() && out.stdout.is_empty());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(file).unwrap()).unwrap();
    assert_eq!(doc["command"], "capacity");
}
