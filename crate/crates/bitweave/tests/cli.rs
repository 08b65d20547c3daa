use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn bitweave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bitweave")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn fails_with(o: &Output, needle: &str) {
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: ") && err.contains(needle), "{err}");
}

fn generate(dir: &Path) -> String {
    let p = dir.join("t.tns").display().to_string();
    stdout(&bitweave(&["generate", "--dims", "16,8,4", "--nnz", "300", "--seed", "2", "-o", &p]));
    p
}

#[test]
fn generate_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let p = generate(dir.path());
    let out = stdout(&bitweave(&["inspect", &p]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "dims 16×8×4");
    assert!(lines[1].starts_with("nnz "));
    assert_eq!(lines[3], "bits 4,3,2 ℓ(p)=9");
    assert_eq!(lines[4], "plans 1260");
    assert_eq!(lines[5], "alto 3,2,1,3,2,1,2,1,1");
}

#[test]
fn bench_and_eval_report_the_plans_they_ran() {
    let dir = tempfile::tempdir().unwrap();
    let p = generate(dir.path());
    let fast = ["--repeats", "1", "--rank", "4", "--threads", "2"];
    let out = stdout(&bitweave(&[&["bench", p.as_str(), "--alto", "--compare", "1,1,1,1,2,2,2,3,3"][..], &fast].concat()));
    assert!(out.starts_with("plan 3,2,1,3,2,1,2,1,1\n"));
    assert_eq!(out.lines().filter(|l| l.starts_with("mode ")).count(), 6);
    assert!(out.lines().last().unwrap().starts_with("speedup "));

    let out = stdout(&bitweave(&[&["eval", p.as_str(), "--plan", "1,1,1,1,2,2,2,3,3"][..], &fast].concat()));
    let rows: Vec<Vec<&str>> = out.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["tensor", "role", "plan", "seconds", "speedup", "storage_bytes"]);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1][1], "baseline");
    assert_eq!(rows[1][rows[1].len() - 2], "1.000000");
}

#[test]
fn errors_are_one_line_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    fails_with(&bitweave(&["inspect", "/definitely/missing.tns"]), "missing.tns");
    let p = generate(dir.path());
    fails_with(&bitweave(&["bench", &p, "--plan", "1,2,3"]), "plan");
    let bad = dir.path().join("bad.tns");
    std::fs::write(&bad, "1 2 3 1.0\n0 1 1 2.0\n").unwrap();
    fails_with(&bitweave(&["inspect", bad.to_str().unwrap()]), "line 2");
    fails_with(&bitweave(&["bench", &p, "--repeats", "0"]), "repeats");
    fails_with(&bitweave(&["train", "--endpoint", "127.0.0.1:1", "--episodes", "1"]), "127.0.0.1:1");
}

#[test]
fn synthetic_training_resumes_from_its_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("ck.json").display().to_string();
    let log = dir.path().join("log.jsonl").display().to_string();
    let args = ["train", "--synthetic", "2,3,1", "--hidden", "1,2,2,2,1,3", "--episodes", "80", "--checkpoint", &ck];
    let full = stdout(&bitweave(&[&args[..], &["--log", &log]].concat()));
    let last_full = full.lines().last().unwrap().to_string();
    assert!(last_full.contains("episodes 80"), "{last_full}");
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 80);
    let first_log: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(&log).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first_log["plan"], "3,1,2,1,2,2");

    // an interrupted run picks up where it stopped and ends in the same place
    std::fs::remove_file(&ck).unwrap();
    stdout(&bitweave(&[&args[..], &["--max-hours", "0.000003"]].concat()));
    let resumed = stdout(&bitweave(&args));
    assert!(resumed.contains("resumed at episode"), "{resumed}");
    assert_eq!(resumed.lines().last().unwrap(), last_full);

    let changed = bitweave(&["train", "--synthetic", "2,3,1", "--episodes", "90", "--checkpoint", &ck]);
    fails_with(&changed, "hyperparameters");
}

#[test]
fn serve_and_train_against_the_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let p = generate(dir.path());
    let cache = dir.path().join("cache.txt");
    let mut server = Command::new(env!("CARGO_BIN_EXE_bitweave"))
        .args(["serve", &p, "--listen", "127.0.0.1:0", "--tensor-id", "t", "--repeats", "1", "--rank", "4"])
        .args(["--cache", cache.to_str().unwrap()])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut first = String::new();
    BufReader::new(server.stdout.take().unwrap()).read_line(&mut first).unwrap();
    let addr = first.split_whitespace().nth(3).unwrap().to_string();
    assert!(first.starts_with("serving t on "), "{first}");

    let out = bitweave(&["train", "--endpoint", &addr, "--episodes", "12"]);
    server.kill().unwrap();
    server.wait().unwrap();
    let out = stdout(&out);
    assert!(out.contains("episodes 12"), "{out}");
    // the server persisted what it measured once the client hung up
    assert!(std::fs::read_to_string(&cache).unwrap().lines().count() >= 2);
}
