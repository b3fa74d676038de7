//! End-to-end runs of the `nearfield` binary.

use std::process::{Command, Output};

fn nearfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nearfield"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn region_reports_fraunhofer_distance() {
    let out = nearfield(&["region", "--freq", "28e9", "--aperture", "0.5"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("fraunhofer: 46.7 m"), "{}", stdout(&out));
}

#[test]
fn region_classifies_a_point_for_a_rectangular_array() {
    let out = nearfield(&[
        "region", "--freq", "28e9", "--length", "0.8", "--width", "0.4", "--point", "0,0,10",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("fraunhofer: 149.4 m"), "{text}");
    assert!(text.contains("region: radiating-near-field"), "{text}");
}

#[test]
fn zero_aperture_is_always_far_field() {
    let out = nearfield(&["region", "--freq", "28e9", "--aperture", "0"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("fraunhofer: 0 m (always far-field)"));
}

#[test]
fn validate_accepts_bundled_scenarios() {
    let out = nearfield(&["validate", "--scenario", "paper_fig4.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).trim(), "OK");
}

#[test]
fn sweep_writes_a_three_column_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = nearfield(&[
        "sweep",
        "--scenario",
        "paper_fig3.json",
        "--set",
        "array.length=0.1",
        "--set",
        "sweep.points=8",
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("fig3.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("z_m,se_focus_bpshz,se_steer_bpshz"));
    assert!(lines.all(|l| l.split(',').count() == 3));
    assert!(dir.path().join("fig3.json").exists());
}

#[test]
fn invalid_override_fails_with_a_message() {
    let out = nearfield(&[
        "validate",
        "--scenario",
        "paper_fig3.json",
        "--set",
        "carrier_frequency_hz=-1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:") && err.contains("carrier_frequency"), "{err}");
}

#[test]
fn missing_scenario_fails() {
    let out = nearfield(&["validate", "--scenario", "no_such_file.json"]);
    assert_eq!(out.status.code(), Some(1));
}
