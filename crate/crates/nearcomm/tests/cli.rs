use std::path::Path;
use std::process::{Command, Output};

fn nearcomm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nearcomm")).args(args).env_remove("NEARCOMM_WORKERS").output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_round_witness_verify() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("h.json");
    let p = dir.path().join("p.json");
    let hh = dir.path().join("hh.json");
    let w = dir.path().join("w.json");
    let o = nearcomm(&["gen", "--n", "6", "--d", "4", "--degree", "3", "--seed", "2", "--out", path(&h)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = nearcomm(&["perturb", "--instance", path(&h), "--delta", "0.05", "--seed", "1", "--out", path(&p)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = nearcomm(&["round", "--instance", path(&p), "--out", path(&hh)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = nearcomm(&["witness", "--instance", path(&hh), "--out", path(&w)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = nearcomm(&["verify", "--instance", path(&p), "--witness", path(&w), "--r", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("ACCEPT"));

    // A tiny threshold rejects a witness with positive energy on the perturbed instance.
    let o = nearcomm(&["verify", "--instance", path(&p), "--witness", path(&w), "--r", "1e-12"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("REJECT"));

    let o = nearcomm(&["verify", "--instance", path(&p), "--witness", path(&w), "--r", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"format": "nearcomm-instance", "version": 1, "n": "eight"}"#).unwrap();
    let o = nearcomm(&["verify", "--instance", path(&bad), "--witness", path(&bad), "--r", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n"));

    let missing = dir.path().join("missing.json");
    let o = nearcomm(&["round", "--instance", path(&missing), "--out", path(&bad)]);
    assert_eq!(o.status.code(), Some(2));

    let o = nearcomm(&["pipeline", "--n", "5", "--degree", "3", "--out-dir", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("degree"));
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn pipeline_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = nearcomm(&["pipeline", "--n", "6", "--delta", "0.01", "--seed", "3", "--out-dir", path(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let fa = read_dir_sorted(&a);
    assert_eq!(fa.len(), 6);
    assert_eq!(fa, read_dir_sorted(&b));
}

#[test]
fn scan_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.csv");
    let three = dir.path().join("three.csv");
    for (out, w) in [(&one, "1"), (&three, "3")] {
        let o = nearcomm(&["scan", "--n", "6", "--d", "2", "--deltas", "0,0.05", "--seeds", "3", "--workers", w, "--out", path(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(&one).unwrap();
    assert_eq!(text, std::fs::read_to_string(&three).unwrap());
    let mut blocks = text.split("\n\n");
    let rows = blocks.next().unwrap();
    assert!(rows.starts_with("delta_requested,seed,delta_actual"));
    assert_eq!(rows.lines().count(), 7);
    let summary = blocks.next().unwrap();
    assert_eq!(summary.lines().count(), 3);
    // 2^6 fits the default oracle cap, so the exact ground column is filled.
    let first = rows.lines().nth(1).unwrap();
    assert_ne!(first.split(',').nth(6).unwrap(), "");
}
