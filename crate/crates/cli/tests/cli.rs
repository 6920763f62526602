//! End-to-end tests of the `equiaffine` binary: exit codes, report
//! determinism, JSON well-formedness, and the emit/classify round trip.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_equiaffine"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

/// Scratch path that is unique per test and cleaned up on drop.
struct Scratch(PathBuf);

impl Scratch {
    fn new(name: &str) -> Scratch {
        let path = std::env::temp_dir().join(format!(
            "equiaffine-cli-{}-{}",
            name,
            std::process::id()
        ));
        Scratch(path)
    }

    fn path(&self) -> &str {
        self.0.to_str().expect("utf-8 temp path")
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

#[test]
fn classify_emits_valid_json_and_exits_zero() {
    let out = run(&["classify", "--family", "calabi", "--points", "9"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&stdout(&out)).expect("stdout is valid JSON");
    assert_eq!(report["verdict"]["name"], "CalabiSphere");
    assert_eq!(report["config"]["command"], "classify");
    assert_eq!(report["config"]["seed"], 7);
    assert_eq!(report["per_point"].as_array().expect("array").len(), 9);
    // Mean curvature is negative and constant for this family.
    let h = report["aggregate"]["mean_curvature"]["mean"]
        .as_f64()
        .expect("mean curvature");
    assert!(h < 0.0, "improper sphere would have h = 0, got {h}");
    assert!(report["versions"]["report_format"].is_string());
}

#[test]
fn reports_are_byte_identical_for_a_fixed_seed() {
    let first = Scratch::new("report-a");
    let second = Scratch::new("report-b");
    let code_a = run(&[
        "classify", "--family", "lorentz", "--points", "7", "--seed", "11",
        "--report", first.path(),
    ])
    .status
    .code();
    let code_b = run(&[
        "classify", "--family", "lorentz", "--points", "7", "--seed", "11",
        "--report", second.path(),
    ])
    .status
    .code();
    assert_eq!(code_a, Some(0));
    assert_eq!(code_b, Some(0));
    let bytes_a = std::fs::read(first.path()).expect("first report");
    let bytes_b = std::fs::read(second.path()).expect("second report");
    assert!(!bytes_a.is_empty());
    assert_eq!(bytes_a, bytes_b, "same seed must reproduce the report exactly");
}

#[test]
fn unclassifiable_spec_exits_one_with_evidence() {
    let spec = Scratch::new("perturbed.sdl");
    std::fs::write(
        spec.path(),
        "n=3;\nF = (u1, u2, u3, (u1^2 + u2^2 + u3^2)/2 + u1^3*u2/10);\n",
    )
    .expect("write spec");
    let out = run(&["classify", "--spec", spec.path()]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&stdout(&out)).expect("valid JSON");
    assert_eq!(report["verdict"]["name"], "Unclassified");
    let evidence = report["verdict"]["evidence"].as_str().expect("evidence");
    assert!(
        evidence.contains("semi-parallel"),
        "evidence should name the failing identity, got: {evidence}"
    );
}

#[test]
fn input_errors_exit_two() {
    let missing = run(&["classify", "--spec", "/no/such/file.sdl"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("cannot read"));

    let unknown = run(&["classify", "--family", "frobnicate"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(stderr(&unknown).contains("unknown family"));

    let bad_const = run(&["classify", "--family", "w1", "--const", "oops"]);
    assert_eq!(bad_const.status.code(), Some(2));
    assert!(stderr(&bad_const).contains("NAME=VALUE"));

    let thin = run(&["classify", "--family", "w3", "--n", "2"]);
    assert_eq!(thin.status.code(), Some(2));
    assert!(stderr(&thin).contains("chart dimension"));

    let low_order = run(&["classify", "--family", "calabi", "--order", "3"]);
    assert_eq!(low_order.status.code(), Some(2));
    assert!(stderr(&low_order).contains("--order"));
}

#[test]
fn non_convex_spec_exits_three() {
    let spec = Scratch::new("saddle.sdl");
    std::fs::write(spec.path(), "n=2;\nF = (u1, u2, u1^2 - u2^2);\n")
        .expect("write spec");
    let out = run(&["classify", "--spec", spec.path()]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("convex"));
}

#[test]
fn emitted_bundle_classifies_back_to_its_family() {
    let bundle = Scratch::new("w1.json");
    let emit = run(&["family", "--id", "w1", "--emit", bundle.path()]);
    assert_eq!(emit.status.code(), Some(0), "stderr: {}", stderr(&emit));
    let text = std::fs::read_to_string(bundle.path()).expect("bundle written");
    assert!(text.contains("immersion-bundle/1"));
    assert!(text.contains("profile_0"));

    let out = run(&["classify", "--spec", bundle.path(), "--points", "9"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&stdout(&out)).expect("valid JSON");
    assert_eq!(report["verdict"]["name"], "WarpedFamily1");
    let c = report["aggregate"]["fiber_constant"]["mean"]
        .as_f64()
        .expect("fiber constant");
    assert!(
        (c - 0.1).abs() < 1e-6,
        "default w1 curvature parameter is 0.1, recovered {c}"
    );
}

#[test]
fn emitted_sdl_chart_classifies_back_as_a_quadric() {
    let chart = Scratch::new("ellipsoid.sdl");
    let emit = run(&["family", "--id", "ellipsoid", "--n", "4", "--emit", chart.path()]);
    assert_eq!(emit.status.code(), Some(0), "stderr: {}", stderr(&emit));
    let text = std::fs::read_to_string(chart.path()).expect("chart written");
    assert!(text.starts_with("n=4;"), "plain chart, not a bundle: {text}");

    let out = run(&["classify", "--spec", chart.path(), "--points", "6", "--format", "text"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("verdict: Quadric"));
}

#[test]
fn check_passes_on_a_generated_sphere() {
    let out = run(&["check", "--family", "calabi", "--points", "9", "--format", "text"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("PASS"), "got: {text}");
    assert!(text.contains("sup residual"));
}

#[test]
fn check_report_carries_per_identity_residuals() {
    let out = run(&["check", "--family", "w6", "--points", "5"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&stdout(&out)).expect("valid JSON");
    assert_eq!(report["verdict"]["name"], "Pass");
    let sup = report["aggregate"]["sup"].as_f64().expect("sup");
    let threshold = report["aggregate"]["threshold"].as_f64().expect("threshold");
    assert!(sup < threshold);
    assert!(report["aggregate"]["per_identity_sup"]["gauss"].is_number());
}

#[test]
fn scan_validates_every_builtin_family() {
    let out = run(&["scan", "--points", "3", "--format", "text"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    for family in [
        "ellipsoid", "hyperboloid", "paraboloid", "calabi", "lorentz",
        "w1", "w2", "w3", "w4", "w5", "w6",
    ] {
        assert!(text.contains(family), "scan output misses {family}: {text}");
    }
    assert!(text.trim_end().ends_with("PASS"));
    assert!(!text.contains("MISMATCH"));
}

#[test]
fn tolerance_scale_flag_loosens_the_verdict() {
    let spec = Scratch::new("slightly-off.sdl");
    // A graph that is a quadric up to a 1e-5 quartic ripple: strict
    // tolerances must refuse to call it one, loose ones accept it.
    std::fs::write(
        spec.path(),
        "n=3;\nF = (u1, u2, u3, (u1^2 + u2^2 + u3^2)/2 + u1^4/100000);\n",
    )
    .expect("write spec");
    let strict = run(&["classify", "--spec", spec.path(), "--points", "5"]);
    assert_eq!(strict.status.code(), Some(1), "stderr: {}", stderr(&strict));
    let loose = run(&[
        "classify", "--spec", spec.path(), "--points", "5", "--tol", "1e4",
    ]);
    assert_eq!(loose.status.code(), Some(0), "stderr: {}", stderr(&loose));
    let report: serde_json::Value =
        serde_json::from_str(&stdout(&loose)).expect("valid JSON");
    assert_eq!(report["verdict"]["name"], "Quadric");
}
