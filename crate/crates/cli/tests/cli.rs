use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nlscanon(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nlscanon"));
    cmd.args(args).env_remove("NLSCANON_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn nlscanon")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn lists_every_experiment() {
    let out = nlscanon(&["list-experiments"], &[]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["symplectic", "darboux", "poincare", "p2-vanish", "normal-form", "tame", "smoothing", "floquet", "zs-crosscheck"] {
        assert!(text.lines().any(|l| l.starts_with(id)), "{id} missing from\n{text}");
    }
}

#[test]
fn malformed_config_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    for bad in ["{not json", r#"{"experiment": "nope"}"#, r#"{"experiment": "poincare", "unknown_key": 1}"#] {
        let cfg = write_config(dir.path(), bad);
        let out = nlscanon(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()], &[]);
        assert!(!out.status.success(), "accepted {bad}");
        assert!(!out.stderr.is_empty());
    }
    let out = nlscanon(&["run", "--config", dir.path().join("missing.json").to_str().unwrap()], &[]);
    assert!(!out.status.success());
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"experiment": "zs-crosscheck"}"#);
    let mut csvs = Vec::new();
    for (k, threads) in [("a", "1"), ("b", "3")] {
        let out_dir = dir.path().join(k);
        let out = nlscanon(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--seed", "7"], &[("NLSCANON_THREADS", threads)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        csvs.push(fs::read(out_dir.join("rows.csv")).unwrap());
        let report: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("report.json")).unwrap()).unwrap();
        assert_eq!(report["seed"], 7);
    }
    assert_eq!(csvs[0], csvs[1]);
    let header = String::from_utf8(csvs[0].clone()).unwrap();
    assert_eq!(header.lines().next().unwrap(), "experiment,backend,N,S,amplitude,quantity,value,tolerance,pass");
}

#[test]
fn violated_tolerance_is_a_failed_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"experiment": "zs-crosscheck", "tolerances": {"zs_unit_determinant": 0.0}}"#);
    let out = nlscanon(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap(), "--threads", "1"], &[]);
    assert_eq!(out.status.code(), Some(1));
    let csv = fs::read_to_string(dir.path().join("rows.csv")).unwrap();
    let row = csv.lines().find(|l| l.contains("zs_unit_determinant")).unwrap();
    assert!(row.ends_with(",false"), "{row}");
}

#[test]
fn zero_threads_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"experiment": "poincare"}"#);
    let out = nlscanon(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()], &[("NLSCANON_THREADS", "0")]);
    assert!(!out.status.success());
}
