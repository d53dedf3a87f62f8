//! End-to-end tests that drive the compiled `bslp` binary the way a user
//! would: instance files on disk, flags on the command line, and assertions
//! on the emitted JSON/CSV and on the process exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bslp_core::analysis::example_e1_two_scenario;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bslp"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_str(&stdout_of(out)).expect("stdout is JSON")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Writes the reference two-scenario instance into `dir` and returns its path.
fn write_instance(dir: &Path) -> PathBuf {
    let path = dir.join("instance.json");
    std::fs::write(&path, example_e1_two_scenario().to_json()).expect("write instance");
    path
}

fn write_file(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).expect("write file");
    path
}

#[test]
fn example_e1_output_is_byte_identical_across_runs() {
    let first = run(&["example-e1"]);
    let second = run(&["example-e1"]);
    assert_eq!(exit_code(&first), 0);
    assert_eq!(exit_code(&second), 0);
    assert_eq!(first.stdout, second.stdout, "report must be reproducible");

    let text = stdout_of(&first);
    for needle in [
        "global minimum: 2.5 at x = 6",
        "expectation",
        "worst-case",
        "x* = 6",
        "value = 2.5",
        "outcome law at x = 6",
        "persistent gap",
    ] {
        assert!(text.contains(needle), "report is missing {needle:?}:\n{text}");
    }
}

#[test]
fn solve_reports_the_global_minimum_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path());

    let out = run(&["solve", inst.to_str().unwrap(), "--spec", "expectation"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    assert_eq!(v["status"], "global_optimal");
    assert!((v["x"][0].as_f64().unwrap() - 6.0).abs() < 1e-6);
    assert!((v["value"].as_f64().unwrap() - 2.5).abs() < 1e-9);

    let out = run(&["solve", inst.to_str().unwrap(), "--spec", "worst-case"]);
    let v = json_of(&out);
    assert_eq!(v["status"], "global_optimal");
    assert!((v["value"].as_f64().unwrap() - 3.0).abs() < 1e-9);

    // The median quantile runs through the bisection path.
    let out = run(&["solve", inst.to_str().unwrap(), "--spec", "var:0.5"]);
    assert_eq!(exit_code(&out), 0);
    let v = json_of(&out);
    assert!((v["x"][0].as_f64().unwrap() - 6.0).abs() < 1e-3);
    assert!((v["value"].as_f64().unwrap() - 2.0).abs() < 1e-3);
}

#[test]
fn solve_with_out_writes_the_payload_to_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path());
    let target = dir.path().join("report.json");

    let out = run(&[
        "solve",
        inst.to_str().unwrap(),
        "--spec",
        "expectation",
        "--out",
        target.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    assert!(stdout_of(&out).is_empty(), "payload goes to the file, not stdout");
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    assert_eq!(v["status"], "global_optimal");
    assert!((v["value"].as_f64().unwrap() - 2.5).abs() < 1e-9);
}

#[test]
fn solve_follows_the_relaxation_schedule_to_a_stationary_point() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path());

    let out = run(&[
        "solve",
        inst.to_str().unwrap(),
        "--spec",
        "expectation",
        "--eps-schedule",
        "1,0.1,0.01,0",
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    // The path has no global certificate; it settles on the boundary
    // stationary point x = 1 of the expectation curve.
    assert_eq!(v["status"], "local_optimal");
    assert!((v["x"][0].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!((v["value"].as_f64().unwrap() - 3.0).abs() < 1e-6);

    // Quantile objectives are swept by bisection and have no single
    // relaxation path, so the flag combination is an input error.
    let out = run(&[
        "solve",
        inst.to_str().unwrap(),
        "--spec",
        "var:0.5",
        "--eps-schedule",
        "1,0",
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn evaluate_at_a_point_reports_value_and_outcome_law() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path());

    let out = run(&["evaluate", inst.to_str().unwrap(), "--spec", "expectation", "--at", "6"]);
    assert_eq!(exit_code(&out), 0);
    let v = json_of(&out);
    assert!((v["value"].as_f64().unwrap() - 2.5).abs() < 1e-9);
    assert!(v["outcomes"].is_array() || v["outcomes"].is_object());

    // Wrong arity is an input error.
    let out = run(&["evaluate", inst.to_str().unwrap(), "--at", "1,2"]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn evaluate_grid_emits_one_csv_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path());

    let out = run(&[
        "evaluate",
        inst.to_str().unwrap(),
        "--spec",
        "cvar:0.5",
        "--grid",
        "1:6:0.01",
    ]);
    assert_eq!(exit_code(&out), 0);
    let text = stdout_of(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 502, "header plus 501 grid points");
    assert_eq!(lines[0], "x,value");
    // At x = 1 both scenario outcomes come from the x + 2 branch, so the
    // upper-tail average of {2.5, 3.5} is 3.5.
    assert_eq!(lines[1], "1,3.5");
    for line in &lines[1..] {
        let (_, value) = line.split_once(',').expect("two columns");
        assert!(value.parse::<f64>().is_ok(), "unexpected row {line:?}");
    }
}

#[test]
fn check_reports_domain_and_recourse_findings() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path());

    let out = run(&["check", inst.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0);
    let v = json_of(&out);
    assert_eq!(v["dom_f"]["status"], "non_empty");
    // The reference instance violates complete recourse: shrinking the
    // right-hand side in the kernel direction defeats every response.
    assert_eq!(v["recourse"]["status"], "incomplete");
    assert_eq!(v["instance"]["scenarios"], 2);
}

#[test]
fn reformulate_writes_json_and_prints_a_listing() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path());
    let target = dir.path().join("system.json");

    let out = run(&[
        "reformulate",
        inst.to_str().unwrap(),
        "--spec",
        "expectation",
        "--out",
        target.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    assert_eq!(v["kind"], "direct");
    assert!(v["system"].is_object());
    let listing = stdout_of(&out);
    assert!(listing.contains("complementarity system"), "listing:\n{listing}");

    // The quantile form reports the bisection surrogate instead.
    let out = run(&["reformulate", inst.to_str().unwrap(), "--spec", "var:0.5"]);
    assert_eq!(exit_code(&out), 0);
    let text = stdout_of(&out);
    assert!(text.contains("quantile_bisection"), "got:\n{text}");
}

#[test]
fn dominance_accepts_attainable_benchmarks_and_rejects_unattainable_ones() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path());
    let ok = write_file(
        dir.path(),
        "bench_ok.json",
        r#"{"order":"first","atoms":[2.0,3.0],"probs":[0.5,0.5]}"#,
    );
    let bad = write_file(
        dir.path(),
        "bench_bad.json",
        r#"{"order":"first","atoms":[1.9],"probs":[1.0]}"#,
    );

    // The law at x = 6 matches the benchmark exactly, so the feasibility
    // probe (zero objective) succeeds.
    let out = run(&["dominance", inst.to_str().unwrap(), "--bench", ok.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    assert_eq!(v["status"], "global_optimal");

    // No decision pushes every outcome below 1.9, so the constrained
    // problem has no solution and the process signals that with exit 1.
    let out = run(&["dominance", inst.to_str().unwrap(), "--bench", bad.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
    let v = json_of(&out);
    assert_eq!(v["status"], "infeasible");

    // Maximizing x over the dominance-constrained set stays at x = 6.
    let out = run(&[
        "dominance",
        inst.to_str().unwrap(),
        "--bench",
        ok.to_str().unwrap(),
        "--objective=-1",
    ]);
    assert_eq!(exit_code(&out), 0);
    let v = json_of(&out);
    assert!((v["x"][0].as_f64().unwrap() - 6.0).abs() < 1e-6);
}

#[test]
fn stability_emits_one_row_per_replication() {
    let out = run(&["stability", "--sizes", "10,20", "--reps", "2", "--seed", "3"]);
    assert_eq!(exit_code(&out), 0);
    let text = stdout_of(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,seed,value,x_star,error,wall_ms");
    assert_eq!(lines.len(), 1 + 4, "two sizes, two replications each");
    for line in &lines[1..] {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 6);
        assert!(cols[3].parse::<f64>().is_ok(), "x_star column in {line:?}");
    }
}

#[test]
fn bad_inputs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path());
    let garbage = write_file(dir.path(), "garbage.json", "{ not json");

    // Unreadable path.
    let out = run(&["solve", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);

    // Unparseable instance.
    let out = run(&["solve", garbage.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);

    // Unknown risk functional.
    let out = run(&["solve", inst.to_str().unwrap(), "--spec", "median"]);
    assert_eq!(exit_code(&out), 2);

    // Out-of-range parameter.
    let out = run(&["evaluate", inst.to_str().unwrap(), "--spec", "cvar:1.5", "--at", "6"]);
    assert_eq!(exit_code(&out), 2);

    // Unknown flag (rejected by the argument parser itself).
    let out = run(&["solve", inst.to_str().unwrap(), "--no-such-flag"]);
    assert_eq!(exit_code(&out), 2);

    // A worker count of zero is meaningless.
    let out = run(&["--threads", "0", "example-e1"]);
    assert_eq!(exit_code(&out), 2);
}
