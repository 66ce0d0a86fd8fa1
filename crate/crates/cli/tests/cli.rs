use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_facejobs");

fn facejobs(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn generate(dir: &Path) {
    let out = facejobs(&[
        "generate",
        "--out",
        dir.to_str().unwrap(),
        "--municipalities",
        "3",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn generate_run_verify_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path());
    let config = tmp.path().join("run.toml");
    let out = facejobs(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let output = tmp.path().join("output");
    let truth = tmp.path().join("truth.csv");
    let out = facejobs(&[
        "verify",
        "--out",
        output.to_str().unwrap(),
        "--truth",
        truth.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("PASS"));
}

#[test]
fn verify_mismatch_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path());
    let config = tmp.path().join("run.toml");
    assert_eq!(
        code(&facejobs(&["run", "--config", config.to_str().unwrap()])),
        0
    );
    let csv = tmp.path().join("output/jobs.csv");
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let face = lines[1].split(',').next().unwrap().to_string();
    let mut fields: Vec<&str> = lines[1].split(',').collect();
    fields[3] = "999999";
    lines[1] = fields.join(",");
    fs::write(&csv, lines.join("\n") + "\n").unwrap();
    let out = facejobs(&[
        "verify",
        "--out",
        tmp.path().join("output").to_str().unwrap(),
        "--truth",
        tmp.path().join("truth.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains(&face), "{stdout}");
}

#[test]
fn config_errors_exit_1() {
    assert_eq!(code(&facejobs(&["run", "--bogus"])), 1);
    // no inputs given at all
    assert_eq!(code(&facejobs(&["run"])), 1);
}

#[test]
fn missing_input_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.csv");
    let m = missing.to_str().unwrap();
    let out = facejobs(&[
        "run",
        "--faces",
        m,
        "--species",
        m,
        "--establishments",
        m,
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn strict_rejection_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path());
    let faces = tmp.path().join("faces.csv");
    let mut text = fs::read_to_string(&faces).unwrap();
    text.push_str("not-a-face,1000000,\"LINESTRING (0 0, 1 1)\"\n");
    fs::write(&faces, text).unwrap();
    let config = tmp.path().join("run.toml");
    let out = facejobs(&["run", "--config", config.to_str().unwrap(), "--strict"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    let out = facejobs(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
}

#[test]
fn inspect_prints_stats() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path());
    let out = facejobs(&[
        "inspect",
        "--faces",
        tmp.path().join("faces.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["faces"]["rows_rejected"], 0);
}
