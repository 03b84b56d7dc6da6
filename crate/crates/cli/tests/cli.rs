use std::process::{Command, Output};

use serde_json::Value;

fn wds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wds-sir")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("valid json on stdout")
}

#[test]
fn validate_bundled() {
    // The second system's pump sits on a pipe of its own.
    for (name, pipes) in [("system1", 8), ("system2", 7)] {
        let out = wds(&["--json", "validate", name]);
        assert_eq!(code(&out), 0);
        let v = json(&out);
        assert_eq!(v["valid"], true);
        assert_eq!(v["pipes"], pipes);
        assert_eq!(v["pumps"].as_array().unwrap().len(), 1);
    }
}

#[test]
fn validate_reports_locations() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "schema_version = 1\n[[nodes]]\nid = \"a\"\nkind = \"junction\"\nelevaton_m = 3\n").unwrap();
    let out = wds(&["--json", "validate", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let v = json(&out);
    assert_eq!(v["valid"], false);
    assert_eq!(v["errors"][0]["line"], 5);
    assert!(String::from_utf8_lossy(&out.stderr).contains("elevaton_m"));
}

#[test]
fn empty_file_errors_at_origin() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.toml");
    std::fs::write(&path, "").unwrap();
    let out = wds(&["--json", "validate", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let v = json(&out);
    assert_eq!(v["errors"][0]["line"], 1);
    assert_eq!(v["errors"][0]["column"], 1);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&wds(&["sir"])), 2);
    assert_eq!(code(&wds(&["validate", "no-such-network"])), 2);
    assert_eq!(code(&wds(&["check", "system1", "--demand", "1,2"])), 2);
    assert_eq!(code(&wds(&["grid", "system1", "--ranges", "0:1"])), 2);
    assert_eq!(code(&wds(&["export", "/no/such/run", "--what", "sequence", "--format", "json"])), 2);
}

#[test]
fn ops_statuses() {
    let v = json(&wds(&["--json", "ops", "system1"]));
    assert_eq!(v["solution"]["pump_states"], serde_json::json!([false]));
    let v = json(&wds(&["--json", "ops", "system2"]));
    assert_eq!(v["solution"]["pump_states"], serde_json::json!([true]));
}

#[test]
fn check_origin_and_far_point() {
    let out = wds(&["--json", "check", "system1", "--demand", "0,0,0"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["feasible"], true);
    assert_eq!(v["inside"][0], 0);
    let out = wds(&["--json", "check", "system1", "--demand", "30,30,30"]);
    assert_eq!(code(&out), 1);
    assert_eq!(json(&out)["feasible"], false);
}

#[test]
fn grid_has_729_rows() {
    let out = wds(&["grid", "system1", "--k", "9"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let rows = text.lines().filter(|l| l.split_whitespace().next().is_some_and(|t| t.parse::<usize>().is_ok())).count();
    assert_eq!(rows, 729);
    let v = json(&wds(&["--json", "grid", "system1"]));
    assert_eq!(v["screen"]["total"], 729);
    for p in v["agreement"]["polytopes"].as_array().unwrap() {
        assert_eq!(p["false_positives"], 0);
    }
}

#[test]
fn sir_run_directory_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = wds(&["--json", "--no-timing", "sir", "system1", "--rounds", "3", "--out", run.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let polys = v["polytopes"].as_array().unwrap();
    assert_eq!(polys.len(), 4);
    assert_eq!(polys[3]["relative_volume"], 1.0);
    assert!(v["steps"][0].get("elapsed_s").is_none());
    for f in ["sequence.json", "settings.json", "inputs.sha256", "input.toml", "final.off", "relative_volume.svg"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let hash = std::fs::read_to_string(run.join("inputs.sha256")).unwrap();
    assert_eq!(hash.split_whitespace().next().unwrap().len(), 64);

    let svg = wds(&["export", run.to_str().unwrap(), "--what", "sequence", "--format", "svg"]);
    assert_eq!(code(&svg), 0);
    let svg = stdout(&svg);
    assert_eq!(svg.matches("<rect x=").count(), 4);
    assert!(svg.contains("data-value=\"1.000000\""));

    let off_path = dir.path().join("final.off");
    let off = wds(&[
        "export",
        run.to_str().unwrap(),
        "--what",
        "polytope",
        "--format",
        "off",
        "--output",
        off_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&off), 0);
    assert!(std::fs::read_to_string(&off_path).unwrap().starts_with("OFF"));

    let bad = wds(&["export", run.to_str().unwrap(), "--what", "timing", "--format", "off"]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn json_output_is_deterministic() {
    let args = ["--json", "--no-timing", "sir", "system2"];
    let a = wds(&args);
    let b = wds(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn probe_finds_no_violations() {
    let out = wds(&["--json", "probe", "system2", "--trials", "100", "--seed", "3"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["pairs"], 100);
    assert_eq!(v["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn inp_input_needs_variables() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.inp");
    std::fs::write(
        &path,
        "[JUNCTIONS]\n J1 10 5\n J2 8 3\n[RESERVOIRS]\n R1 60\n[PIPES]\n P1 R1 J1 500 200 100\n P2 J1 J2 400 150 100\n[END]\n",
    )
    .unwrap();
    let p = path.to_str().unwrap();
    assert_eq!(code(&wds(&["validate", p])), 0);
    assert_eq!(code(&wds(&["sir", p])), 2);
    let out = wds(&["--json", "sir", p, "--vars", "J1,J2"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["variable_nodes"], serde_json::json!(["J1", "J2"]));
}
