use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use epsreach::reach::QEBackend;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_epsreach"))
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    let o = bin().args(args).arg("--out").arg(out).output().expect("binary runs");
    if !o.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&o.stderr));
    }
    o
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn translate_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["atom", "conj", "disj"] {
        let input = golden(&format!("{name}.sexpr"));
        let o = run(&["translate", input.to_str().unwrap(), "--epsilon", "1"], dir.path());
        assert_eq!(o.status.code(), Some(0));
        let got = std::fs::read_to_string(dir.path().join(format!("{name}.eps.sexpr"))).unwrap();
        let want = std::fs::read_to_string(golden(&format!("{name}.expected.sexpr"))).unwrap();
        assert_eq!(got, want, "{name}");
    }
}

#[test]
fn convergence_defaults_hold_and_scripts_match() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["check-convergence"], dir.path());
    let r = read_json(&dir.path().join("convergence.json"));
    assert_eq!(r["scan"]["contracting"], 100);
    assert_eq!(r["scan"]["evaluated"], 100);
    for ext in ["smt2", "red"] {
        let got = std::fs::read_to_string(dir.path().join(format!("convergence.{ext}"))).unwrap();
        let want = std::fs::read_to_string(golden(&format!("convergence.expected.{ext}"))).unwrap();
        assert_eq!(got, want, "{ext}");
    }
    if QEBackend::smt().available() {
        assert_eq!(r["symbolic"]["verdict"], "true");
        assert_eq!(o.status.code(), Some(0));
    } else {
        println!("[skipped] symbolic leg: no SMT solver");
        assert_eq!(r["symbolic"]["status"], "skipped");
    }
}

#[test]
fn displaced_q1_is_false() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["check-convergence", "--displace-q1", "10"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let r = read_json(&dir.path().join("convergence.json"));
    assert_eq!(r["holds"], false);
    if QEBackend::smt().available() {
        assert_eq!(r["symbolic"]["verdict"], "false");
    }
}

#[test]
fn large_epsilon_is_vacuous() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["check-convergence", "--epsilon", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&dir.path().join("convergence.json"));
    assert_eq!(r["scan"]["vacuous"], true);
    assert!(r["holds"].is_null());
}

#[test]
fn missing_backend_without_fallback_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["check-convergence", "--backend", "redlog", "--no-fallback", "--samples", "10"])
        .arg("--out")
        .arg(dir.path())
        .env("EPSREACH_REDUCE", dir.path().join("no-such-reduce"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[skipped]"));
    let r = read_json(&dir.path().join("convergence.json"));
    assert_eq!(r["symbolic"]["status"], "skipped");
}

#[test]
fn simulate_examples_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--model", "sgn", "--start=-1,6"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&dir.path().join("simulate.json"));
    let x: Vec<f64> = serde_json::from_value(r["final_state"].clone()).unwrap();
    assert!((x[0] + 6.0).abs() < 1e-3 && x[1].abs() < 1e-3, "{x:?}");
    for f in ["trace.csv", "samples.csv", "phase.svg"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let svg = std::fs::read_to_string(dir.path().join("phase.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));

    let o = run(&["simulate", "--model", "taylor", "--start=1,1", "--horizon", "20"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["simulate", "--model", "tanh", "--start=-0.5,-0.5", "--horizon", "20"], dir.path());
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert_eq!(run(&["reach", "--model", "ball", "--epsilon", "0.5"], d.path()).status.code(), Some(0));
        assert_eq!(run(&["simulate", "--model", "pwl", "--horizon", "5"], d.path()).status.code(), Some(0));
        assert_eq!(run(&["check-convergence", "--samples", "20", "--seed", "7"], d.path()).status.code(), Some(0));
    }
    for f in ["reach.json", "reach.csv", "reach.pgm", "simulate.json", "trace.csv", "samples.csv", "convergence.json", "convergence_scan.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
    let r = read_json(&a.path().join("reach.json"));
    assert_eq!(r["reason"], "no-ball-growth");
    assert_eq!(read_json(&a.path().join("convergence.json"))["seed"], 7);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out = dir.path().join("from-config");
    std::fs::write(
        &cfg,
        serde_json::json!({"model": "pwl", "params": {"tau": 2.5}, "epsilon": 0.3, "out": out}).to_string(),
    )
    .unwrap();
    let o = bin().args(["build", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("automaton.json").is_file());
    // flags win over the file
    let o = bin().args(["build", "--model", "ball", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let doc = read_json(&out.join("automaton.json"));
    assert_eq!(doc["variables"], serde_json::json!(["x1", "x2"]));
}

#[test]
fn invalid_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"epsilon": 0.1, "colour": "red"}"#).unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec!["build".into(), "--config".into(), bad.to_str().unwrap().into()],
        vec!["reach".into(), "--epsilon".into(), "-1".into()],
        vec!["simulate".into(), "--model".into(), "nonesuch".into()],
        vec!["simulate".into(), "--start=1,2,3".into()],
        vec!["translate".into(), dir.path().join("missing.sexpr").to_str().unwrap().into()],
        vec!["check-convergence".into(), "--model".into(), "pwl".into()],
        vec!["frobnicate".into()],
    ];
    for args in cases {
        let o = bin().args(&args).arg("--out").arg(dir.path()).output().unwrap();
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}
