use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

fn mixflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixflow"))
        .args(args)
        .env("MIXFLOW_WORKERS", "1")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train(dir: &Path) -> Output {
    mixflow(&[
        "train", "--scenario", s(&scenario("single")), "--iterations", "1", "--seed", "7", "--quiet", "--out", s(dir),
    ])
}

#[test]
fn train_writes_checkpoint_and_one_log_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("checkpoint.bin").is_file());
    let log = fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
    let lines: Vec<_> = log.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "iteration,episode_return,mean_loss,epsilon,buffer_size");
    assert!(lines[1].starts_with("0,"));
}

#[test]
fn training_twice_gives_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(train(a.path()).status.success());
    assert!(train(b.path()).status.success());
    for f in ["checkpoint.bin", "train_log.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn missing_scenario_is_a_usage_error_naming_the_path() {
    let out = mixflow(&["train", "--scenario", "no/such/file.json", "--iterations", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no/such/file.json"));
}

#[test]
fn bad_flag_value_is_a_usage_error() {
    let out = mixflow(&["eval", "--scenario", s(&scenario("single")), "--config", "two"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_with_corrupted_checkpoint_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train(dir.path()).status.success());
    let ck = dir.path().join("checkpoint.bin");
    let mut bytes = fs::read(&ck).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    fs::write(&ck, bytes).unwrap();
    let out = mixflow(&[
        "eval", "--scenario", s(&scenario("single")), "--checkpoint", s(&ck), "--runs", "1", "--out", s(dir.path()),
    ]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("corrupt"));
}

#[test]
fn eval_one_run_gives_one_network_row() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train(dir.path()).status.success());
    let out = mixflow(&[
        "eval",
        "--scenario",
        s(&scenario("single")),
        "--checkpoint",
        s(&dir.path().join("checkpoint.bin")),
        "--runs",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let net = fs::read_to_string(dir.path().join("network.csv")).unwrap();
    let lines: Vec<_> = net.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("network,"));
    let per = fs::read_to_string(dir.path().join("per_intersection.csv")).unwrap();
    assert_eq!(per.lines().count(), 2);
}

#[test]
fn eval_of_unsignalized_scenario_requires_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = mixflow(&["eval", "--scenario", s(&scenario("single")), "--runs", "1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn baseline_only_sweep_matches_eval() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep");
    let eval = dir.path().join("eval");
    let grid = scenario("grid2x2");
    let out = mixflow(&["sweep", "--scenario", s(&grid), "--config", "0U+4S", "--runs", "2", "--out", s(&sweep)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = mixflow(&["eval", "--scenario", s(&grid), "--runs", "2", "--out", s(&eval)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["per_intersection.csv", "network.csv"] {
        assert_eq!(fs::read(sweep.join(f)).unwrap(), fs::read(eval.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sweep_has_one_column_per_config_and_rate() {
    let dir = tempfile::tempdir().unwrap();
    let cks = dir.path().join("cks");
    let out = mixflow(&[
        "sweep",
        "--scenario",
        s(&scenario("grid2x2")),
        "--config",
        "0U+4S,2U+2S",
        "--rv-rate",
        "0.5,0.8",
        "--train",
        "--iterations",
        "1",
        "--runs",
        "1",
        "--checkpoint",
        s(&cks),
        "--out",
        s(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let header = table.lines().next().unwrap();
    // scope column plus W and Q per member
    assert_eq!(header.split(',').count(), 1 + 2 * 4, "{header}");
    assert!(cks.join("2U+2S_rv0.5.bin").is_file());
    assert!(cks.join("2U+2S_rv0.8.bin").is_file());
}
