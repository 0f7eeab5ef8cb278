use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn layf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layf"))
        .arg("--output-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("spawn layf")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn generate(dir: &Path) -> String {
    let path = dir.join("s.layf");
    let o = layf(
        dir,
        &[
            "gen-synthetic", "--out", path.to_str().unwrap(), "--layers", "4", "--dim", "8", "--classes", "6",
            "--tasks", "3", "--train-per-class", "20", "--seed", "3",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    path.to_str().unwrap().to_owned()
}

#[test]
fn every_subcommand_has_help() {
    let dir = tempdir().unwrap();
    for sub in [
        "gen-synthetic", "run-cil", "run-ocl", "diagnose-layers", "universality", "memory-report", "inspect",
    ] {
        let o = layf(dir.path(), &[sub, "--help"]);
        assert!(o.status.success(), "{sub}");
        assert!(stdout(&o).contains("Usage"), "{sub}");
    }
}

#[test]
fn memory_report_prints_gram_entries() {
    let dir = tempdir().unwrap();
    let o = layf(dir.path(), &["memory-report"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("21,233,664"), "{text}");
    assert!(text.contains("RanPAC"));
}

#[test]
fn generate_inspect_and_run() {
    let dir = tempdir().unwrap();
    let stream = generate(dir.path());
    assert!(dir.path().join("s.test.layf").exists());
    assert!(dir.path().join("s.layf.json").exists());

    let o = layf(dir.path(), &["inspect", &stream]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("samples       120"));

    let o = layf(dir.path(), &["run-cil", "--stream", &stream, "--k", "3", "--seed", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let record = dir.path().join("cil-layup-k3.json");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&record).unwrap()).unwrap();
    assert_eq!(json["per_task"].as_array().unwrap().len(), 3);
    assert_eq!(json["R"].as_array().unwrap().len(), 3);
    assert!(dir.path().join("cil-layup-k3.txt").exists());

    let o = layf(dir.path(), &["run-ocl", "--stream", &stream, "--k", "2", "--lambda", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("ocl-layup-k2.json").exists());

    let o = layf(dir.path(), &["diagnose-layers", "--stream", &stream]);
    assert!(o.status.success());
    assert!(dir.path().join("diagnose-layers.json").exists());

    let o = layf(dir.path(), &["universality", "--stream", &stream, "--k", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn run_records_are_deterministic() {
    let dir = tempdir().unwrap();
    let stream = generate(dir.path());
    let read = || fs::read(dir.path().join("cil-layup-k2.json")).unwrap();
    assert!(layf(dir.path(), &["run-cil", "--stream", &stream, "--k", "2", "--seed", "5"]).status.success());
    let first = read();
    assert!(layf(dir.path(), &["run-cil", "--stream", &stream, "--k", "2", "--seed", "5"]).status.success());
    assert_eq!(first, read());
}

#[test]
fn exit_codes_follow_error_categories() {
    let dir = tempdir().unwrap();
    assert_eq!(layf(dir.path(), &["no-such-command"]).status.code(), Some(2));
    let stream = generate(dir.path());
    let o = layf(dir.path(), &["run-ocl", "--stream", &stream, "--k", "9", "--lambda", "1"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let missing = dir.path().join("missing.layf");
    let o = layf(dir.path(), &["inspect", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));

    let mut bytes = fs::read(&stream).unwrap();
    bytes[..4].copy_from_slice(b"XXXX");
    fs::write(&stream, bytes).unwrap();
    let o = layf(dir.path(), &["inspect", &stream]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!o.stderr.is_empty());
}
