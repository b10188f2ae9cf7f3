//! Exit codes and error messages of the `patchy` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn patchy(args: &[&str], scenario: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchy"))
        .args(args)
        .arg("--scenario")
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn check_passes_on_square() {
    let tmp = tempfile::tempdir().unwrap();
    let o = patchy(&["check"], &scenarios().join("square.toml"), tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn check_fails_with_witness_for_one_direction() {
    let tmp = tempfile::tempdir().unwrap();
    let o = patchy(&["check"], &scenarios().join("one_direction.toml"), tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("witnesses") && err.contains("face normal"), "{err}");
}

#[test]
fn malformed_scenario_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(tmp.path(), "bad.toml", "name = \"x\"\n[constraint]\nkind = \"box\"\nlo = [0.0\n");
    let o = patchy(&["check"], &p, tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let p = write(tmp.path(), "unknown.toml", "name = \"x\"\nbogus = 1\n");
    assert_eq!(patchy(&["check"], &p, tmp.path()).status.code(), Some(2));
}

#[test]
fn missing_argument_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_patchy")).arg("check").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn render_rejects_three_dimensions() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(
        tmp.path(),
        "car.toml",
        r#"name = "car"
[system]
name = "unicycle"
[constraint]
kind = "box"
lo = [-1.0, -1.0, -4.0]
hi = [1.0, 1.0, 4.0]
[target]
kind = "point"
center = [0.0, 0.0, 0.0]
"#,
    );
    let o = patchy(&["render"], &p, tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("render supports d=2 only"));
    assert!(!tmp.path().join("scene.svg").exists());
}

#[test]
fn target_outside_constraint_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenarios().join("square.toml")).unwrap();
    let p = write(tmp.path(), "far.toml", &text.replace("center = [0.0, 0.0]", "center = [3.0, 0.0]"));
    let o = patchy(&["synthesize"], &p, tmp.path());
    assert_ne!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("interior"));
    assert!(!tmp.path().join("feedback.json").exists());
}

#[test]
fn simulate_without_feedback_reports_missing_file() {
    let tmp = tempfile::tempdir().unwrap();
    let o = patchy(&["simulate"], &scenarios().join("square.toml"), tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("feedback.json"));
}
