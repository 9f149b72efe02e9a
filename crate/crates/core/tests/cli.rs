use std::path::Path;
use std::process::{Command, Output};

fn flowmeter(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowmeter")).args(args).current_dir(dir).output().expect("spawn flowmeter")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.cfg", "speeds = 0, 4e-4\nwarp_factor = 9\n");
    let out = flowmeter(&["detect", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warp_factor"));
}

#[test]
fn missing_config_file_and_bad_flags_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(flowmeter(&["detect", "--config", "nope.cfg"], tmp.path()).status.code(), Some(1));
    assert_eq!(flowmeter(&["detect", "--seed", "abc"], tmp.path()).status.code(), Some(1));
    assert_eq!(flowmeter(&["frobnicate"], tmp.path()).status.code(), Some(1));
}

#[test]
fn inconsistent_values_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    for text in ["t_lo = 0.3\nt_hi = 0.1\n", "speeds = 0\n", "prior_min = 1e-3\nprior_max = 0\n", "mode = estimate\n"] {
        let cfg = write(tmp.path(), "c.cfg", text);
        let out = flowmeter(&["detect", "--config", &cfg], tmp.path());
        assert_eq!(out.status.code(), Some(1), "accepted: {text:?}");
    }
}

#[test]
fn help_exits_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = flowmeter(&["--help"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("validate"));
}

#[test]
fn weak_particle_oracle_fails_validation_with_exit_2() {
    // too few particles to tell the mutated channel apart
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "weak.cfg", "particles = 500\n");
    let out = flowmeter(&["validate", "--config", &cfg, "--trials", "20000", "--out", "v"], tmp.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(tmp.path().join("v/validate.csv")).unwrap();
    assert!(table.lines().any(|l| l.starts_with("mutation_detected_z,0,")));
}

#[test]
fn detect_writes_stamped_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "d.cfg", "speeds = 0, 4e-4\ntimes = 0.109\nobservations = 30\n");
    let out = flowmeter(&["detect", "--config", &cfg, "--trials", "5000", "--out", "d"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let perf = std::fs::read_to_string(tmp.path().join("d/detect_performance.csv")).unwrap();
    assert!(perf.starts_with("# flowmeter: detect\n"));
    assert!(perf.contains("# config: times=0.109"));
    assert!(perf.contains("# input_sha256: "));
    let decision = std::fs::read_to_string(tmp.path().join("d/detect_decision.csv")).unwrap();
    // 30 counts sit far above the single-sample threshold of about 21.5
    assert!(decision.lines().any(|l| l.starts_with("1,") && l.ends_with(",1")));
}

#[test]
fn estimate_with_given_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "e.cfg", "times = 0.073\nobservations = 28\n");
    let out = flowmeter(&["estimate", "--config", &cfg, "--trials", "5000", "--out", "e"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let est = std::fs::read_to_string(tmp.path().join("e/estimate.csv")).unwrap();
    let mmse: f64 = est.lines().find(|l| l.starts_with("mmse,")).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((0.0..1e-3).contains(&mmse));
}
