use std::fs;
use std::process::{Command, Output};

fn tfdsed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tfdsed")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn params_expect_sets_exit_code() {
    let ok = tfdsed(&["params", "--preset", "baseline", "--expect", "4.428"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("PASS"));
    assert!(stdout(&ok).starts_with("total\t4427956"));

    let miss = tfdsed(&["params", "--preset", "baseline", "--expect", "5.0"]);
    assert_eq!(miss.status.code(), Some(1));
    assert!(stdout(&miss).contains("FAIL"));
}

#[test]
fn params_tolerance_widens_the_window() {
    let o = tfdsed(&["params", "--preset", "tfd", "--expect", "12.703", "--tol", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn unknown_preset_and_suite_are_usage_errors() {
    assert_eq!(tfdsed(&["params", "--preset", "nonsense"]).status.code(), Some(2));
    assert_eq!(tfdsed(&["gradcheck", "--module", "nope"]).status.code(), Some(2));
    assert_eq!(tfdsed(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn missing_files_are_io_errors() {
    let o = tfdsed(&["train", "--config", "/nonexistent/run.cfg", "--data", "/nonexistent"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "model.preset = tfd\nthis line has no equals sign\n").unwrap();
    let o = tfdsed(&["params", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gradcheck_prints_one_line_per_suite() {
    let o = tfdsed(&["gradcheck", "--module", "ops", "--seeds", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.lines().count() > 3);
    assert!(out.lines().all(|l| l.starts_with("PASS\t")), "{}", out);
}

#[test]
fn shipped_configs_parse() {
    for name in ["desk.cfg", "desk_fdy.cfg"] {
        let path = format!("{}/configs/{}", env!("CARGO_MANIFEST_DIR"), name);
        let o = tfdsed(&["params", "--config", &path]);
        assert_eq!(o.status.code(), Some(0), "{}: {}", name, String::from_utf8_lossy(&o.stderr));
    }
}
