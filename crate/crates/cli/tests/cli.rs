use std::path::Path;
use std::process::{Command, Output};

fn neobft(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_neobft"));
    cmd.args(args).env_remove("NEOBFT_OUT_DIR");
    if let Some(dir) = out_env {
        cmd.env("NEOBFT_OUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const FAST: [&str; 2] = ["--override", "crypto=\"test\""];

#[test]
fn lists_bundled_scenarios() {
    let o = neobft(&["list-scenarios"], None);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().count() >= 12);
    for name in ["fastpath-n4", "sequencer-failover", "equivocating-sequencer", "sync-heavy"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn selftest_passes() {
    let o = neobft(&["selftest"], None);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("crypto golden vectors") && text.contains("linearizability fixtures"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn run_writes_trace_metrics_and_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = neobft(&["run", "fastpath-n4", "--seed", "4", "--out", out, FAST[0], FAST[1]], None);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("fastpath-n4 seed 4: PASS"));
    let seed = dir.path().join("fastpath-n4/seed-4");
    for f in ["trace.jsonl", "metrics.json", "verdicts.json"] {
        assert!(seed.join(f).is_file(), "{f}");
    }
    let trace = std::fs::read_to_string(seed.join("trace.jsonl")).unwrap();
    for line in trace.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for field in ["time", "kind", "src", "dst", "summary"] {
            assert!(v.get(field).is_some(), "{field} missing in {line}");
        }
    }
}

#[test]
fn seed_ranges_and_env_default_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = neobft(&["run", "fastpath-n4", "--seeds", "1..3", FAST[0], FAST[1]], Some(dir.path()));
    assert!(o.status.success());
    for s in 1..=3 {
        assert!(dir.path().join(format!("fastpath-n4/seed-{s}/metrics.json")).is_file());
    }
}

#[test]
fn report_is_reproducible_and_written() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = d.path().to_str().unwrap();
        let o = neobft(&["run", "drop-1pct", "--seeds", "1..2", "--out", out, FAST[0], FAST[1]], None);
        assert!(o.status.success());
    }
    let ra = neobft(&["report", a.path().to_str().unwrap()], None);
    let rb = neobft(&["report", b.path().to_str().unwrap()], None);
    assert!(ra.status.success());
    assert_eq!(stdout(&ra), stdout(&rb));
    assert!(stdout(&ra).contains("drop-1pct"));
    assert!(a.path().join("report.json").is_file());
}

#[test]
fn report_fails_when_a_check_failed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(neobft(&["run", "fastpath-n4", "--seed", "1", "--out", out, FAST[0], FAST[1]], None).status.success());
    let verdicts = dir.path().join("fastpath-n4/seed-1/verdicts.json");
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&verdicts).unwrap()).unwrap();
    v[0]["pass"] = serde_json::Value::Bool(false);
    std::fs::write(&verdicts, v.to_string()).unwrap();
    let o = neobft(&["report", out], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAILED"));
}

#[test]
fn empty_report_directory_is_not_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = neobft(&["report", dir.path().to_str().unwrap()], None);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "no runs found\n");
}

#[test]
fn bad_input_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let typo = neobft(&["run", "fastpath-n4", "--out", out, "--override", "faults.aom_dorp=0.1"], None);
    assert_eq!(typo.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&typo.stderr).contains("aom_dorp"));
    let missing = neobft(&["run", "no-such-scenario", "--out", out], None);
    assert_eq!(missing.status.code(), Some(2));
    let range = neobft(&["run", "fastpath-n4", "--seeds", "5..2", "--out", out], None);
    assert_eq!(range.status.code(), Some(2));
}

#[test]
fn scenario_files_run_from_a_path() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("tiny.toml");
    std::fs::write(
        &file,
        "name = \"tiny\"\nn = 4\nf = 1\ncrypto = \"test\"\n\n[workload]\nclients = 2\nops_per_client = 5\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = neobft(&["run", file.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("tiny seed 1: PASS 10/10"));
}
