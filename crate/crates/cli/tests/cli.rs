use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ledgersim"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("LEDGERSIM_ARTIFACT_DIR").output().expect("binary runs")
}

fn write_preset(dir: &Path, preset: &str) -> String {
    let out = run(&["scenario", preset, "--seed", "3"]);
    assert!(out.status.success());
    let path = dir.join(format!("{preset}.json"));
    fs::write(&path, out.stdout).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_then_verify_replay_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_preset(tmp.path(), "double-spend");
    let out_dir = tmp.path().join("runs");
    let out = run(&["run", &scenario, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = out_dir.join("double-spend");
    for f in ["blocks.dat", "index.dat", "state.dump", "verdicts.csv", "trace.log", "metrics.csv", "blacklist.csv"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }
    let metrics = fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("window,committed_valid,committed_invalid,forks\n"));

    let dir = run_dir.to_str().unwrap();
    assert!(run(&["verify-chain", dir]).status.success());
    let replay = run(&["replay", dir]);
    assert!(replay.status.success());
    assert!(String::from_utf8_lossy(&replay.stdout).contains("state.dump: match"));
    assert!(run(&["report", dir]).status.success());

    let mut blocks = fs::read(run_dir.join("blocks.dat")).unwrap();
    let last = blocks.len() - 1;
    blocks[last] ^= 0xff;
    fs::write(run_dir.join("blocks.dat"), blocks).unwrap();
    assert!(!run(&["verify-chain", dir]).status.success());
    assert!(!run(&["report", dir]).status.success());
}

#[test]
fn artifact_dir_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_preset(tmp.path(), "token-happy-path");
    let out = bin()
        .args(["run", &scenario, "--duration", "30"])
        .env("LEDGERSIM_ARTIFACT_DIR", tmp.path().join("env-runs"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("env-runs/token-happy-path/summary.txt").exists());
}

#[test]
fn parallel_jobs_use_separate_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write_preset(tmp.path(), "dos-blacklist");
    let b = write_preset(tmp.path(), "lottery-pow");
    let out_dir = tmp.path().join("runs");
    let out = run(&["run", &a, &b, &a, "--jobs", "3", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    for d in ["dos-blacklist", "lottery-pow", "dos-blacklist-2"] {
        assert!(out_dir.join(d).join("summary.txt").exists(), "{d}");
    }
    let blacklist = fs::read_to_string(out_dir.join("dos-blacklist/blacklist.csv")).unwrap();
    assert_eq!(blacklist.lines().count(), 2);
}

#[test]
fn invalid_scenarios_report_the_field_path() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    fs::write(
        &path,
        r#"{"name": "bad", "seed": 1, "duration": 5,
            "roster": {"orgs": [{"name": "org1"}], "clients": [{"id": "a", "org": "org1"}]},
            "workload": [{"kind": "invoke", "at": 0, "client": "a", "chaincode": "missing", "operation": "x"}]}"#,
    )
    .unwrap();
    let out = run(&["run", path.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("workload[0].chaincode"));
}

const HASH_LOCK: &str = "contract RevealPreimage(hash: Sha256(Bytes), val: Value) {
  clause reveal(preimage: Bytes) {
    verify sha256(preimage) == hash
    unlock val
  }
}";

#[test]
fn script_compile_and_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("lock.script");
    fs::write(&file, HASH_LOCK).unwrap();
    let f = file.to_str().unwrap();
    let compiled = run(&["script", "compile", f]);
    assert!(compiled.status.success());
    let hex = String::from_utf8_lossy(&compiled.stdout);
    assert!(!hex.trim().is_empty() && hex.trim().chars().all(|c| c.is_ascii_hexdigit()));

    let digest = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad";
    let params = format!("{digest},1000");
    let good = run(&["script", "eval", f, "--clause", "reveal", "--params", &params, "--args", "616263"]);
    assert!(good.status.success(), "{}", String::from_utf8_lossy(&good.stdout));
    assert!(String::from_utf8_lossy(&good.stdout).contains("vm: unlocked"));
    let bad = run(&["script", "eval", f, "--clause", "reveal", "--params", &params, "--args", "616264"]);
    assert_eq!(bad.status.code(), Some(1));
    let unknown = run(&["script", "eval", f, "--clause", "nope", "--params", &params]);
    assert!(!unknown.status.success());
}
