use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn resest() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_resest"));
    cmd.env_remove("RESEST_OUT_DIR");
    cmd
}

fn run(args: &[&str]) -> Output {
    resest().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Scalar plant sensed by five unit sensors on the given topology.
fn scalar_scenario(dir: &Path, topology: &str, attacks: &str, budget: usize) -> String {
    let text = format!(
        r#"{{
  "name": "scalar_test",
  "plant": {{ "a": [[0]], "b": [[0]], "c": [[[1]], [[1]], [[1]], [[1]], [[1]]] }},
  "topology": {topology},
  "attack_budget": {budget},
  "kappa": 1.0,
  "gamma": 10.0,
  "variant": {{ "kind": "lyapunov", "p": [[1]] }},
  "attacks": {attacks},
  "input": {{ "kind": "zero" }},
  "initial": {{ "kind": "explicit", "x": [1.0] }},
  "horizon": 5.0,
  "dt": 0.01
}}"#
    );
    let path = dir.join("scalar_test.json");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const RING: &str = r#"{ "kind": "ring" }"#;

#[test]
fn audit_of_bundled_scenario_passes() {
    let o = run(&["audit", "threeinertia"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    for label in [
        "attack budget: PASS",
        "redundant observability: PASS",
        "connected graph: PASS",
        "shared basis: PASS",
    ] {
        assert!(out.contains(label), "missing {label:?} in\n{out}");
    }
    assert!(out.contains("Indicator table"));
}

#[test]
fn audit_of_broken_fixtures_fails() {
    for name in ["jordan_chain_broken", "rotation_pairs_broken"] {
        let o = run(&["audit", name]);
        assert_eq!(o.status.code(), Some(1), "{name}: {}", stdout(&o));
        assert!(stdout(&o).contains("shared basis: FAIL"), "{name}: {}", stdout(&o));
    }
}

#[test]
fn audit_flags_disconnected_graph() {
    let dir = tempfile::tempdir().unwrap();
    let topo = r#"{ "kind": "edges", "edges": [[1, 2], [2, 3], [4, 5]] }"#;
    let path = scalar_scenario(dir.path(), topo, "[]", 2);
    let o = run(&["audit", &path]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("connected graph: FAIL"), "{}", stdout(&o));
}

#[test]
fn malformed_scenarios_exit_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"name\": \"x\",\n  \"plant\": [\n}").unwrap();
    let o = run(&["audit", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));

    let unknown = scalar_scenario(dir.path(), r#"{ "kind": "ring", "size": 5 }"#, "[]", 2);
    let o = run(&["audit", &unknown]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = run(&["audit", "no_such_scenario"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn median_reports_the_bound() {
    let o = run(&["median", "--z", "0,1,2,3,100", "--gamma", "10"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("median set = [2, 2]"), "{out}");
    assert!(out.contains("median tracking bound = 0.32361: PASS"), "{out}");
}

#[test]
fn median_writes_trajectory_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("median.csv");
    let o = run(&[
        "median",
        "--n",
        "4",
        "--topology",
        "complete",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,x_1,x_2,x_3,x_4,dist_to_median_set");
    assert!(text.lines().count() > 10);
}

#[test]
fn median_rejects_all_zero_indicators() {
    let o = run(&["median", "--s", "0,0,0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let o = run(&["simulate", "scalar_lyapunov", "--out-dir", out_dir]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("steady-state bound = 4.854102e0: PASS"),
        "{}",
        stdout(&o)
    );

    let csv = fs::read_to_string(dir.path().join("scalar_lyapunov.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(&header[..5], &["t", "x_1", "xhat_1_1", "z_1_1", "residual_1"]);
    assert_eq!(&header[header.len() - 3..], &["xbar_avg_1", "W", "V"]);
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert!(rows.iter().all(|r| r.split(',').count() == header.len()));

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("scalar_lyapunov.json")).unwrap()).unwrap();
    assert_eq!(json["csv"], "scalar_lyapunov.csv");
    assert_eq!(json["assumption_violating"], false);
    assert_eq!(json["agents"].as_array().unwrap().len(), 5);
    assert_eq!(json["scenario"]["name"], "scalar_lyapunov");
    assert!(json["tail_metrics"]["max_inf_error"].as_f64().unwrap() < json["bounds"]["steady_state"].as_f64().unwrap());
}

#[test]
fn out_dir_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = scalar_scenario(dir.path(), RING, "[]", 2);
    let o = resest()
        .env("RESEST_OUT_DIR", dir.path())
        .args(["simulate", &path])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("scalar_test.csv").exists());
    assert!(dir.path().join("scalar_test.json").exists());
}

#[test]
fn budget_violations_need_force() {
    let dir = tempfile::tempdir().unwrap();
    let attacks = r#"[
    { "bank": 1, "signal": { "kind": "constant_bias", "value": 5.0, "start": 0.0 } },
    { "bank": 2, "signal": { "kind": "constant_bias", "value": 5.0, "start": 0.0 } },
    { "bank": 3, "signal": { "kind": "constant_bias", "value": 5.0, "start": 0.0 } }
  ]"#;
    let path = scalar_scenario(dir.path(), RING, attacks, 2);
    let out_dir = dir.path().to_str().unwrap();

    let o = run(&["simulate", &path, "--out-dir", out_dir]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(!dir.path().join("scalar_test.csv").exists());

    let o = run(&["simulate", &path, "--out-dir", out_dir, "--force"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("assumption-violating"), "{}", stdout(&o));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("scalar_test.json")).unwrap()).unwrap();
    assert_eq!(json["assumption_violating"], true);
}

#[test]
fn bounds_reports_plug_and_play_gains() {
    let o = run(&["bounds", "scalar_lyapunov", "--nbar", "5", "--sbar", "0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("gamma = 134.164079"), "{out}");
    assert!(out.contains("kappa * gamma = 1"), "{out}");
}

#[test]
fn bounds_explain_the_general_variant() {
    let o = run(&["bounds", "threeinertia", "--nbar", "5", "--sbar", "0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("steady-state bound = n/a"), "{out}");
    assert!(out.contains("needs the Lyapunov variant"), "{out}");
}

#[test]
fn sweep_reports_the_frontier() {
    let o = run(&[
        "sweep",
        "scalar_median",
        "--gamma",
        "2,8,32",
        "--product",
        "10",
        "--target",
        "0.1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<&str> = out
        .lines()
        .filter(|l| l.starts_with(|c: char| c.is_ascii_digit()))
        .collect();
    assert_eq!(rows.len(), 3, "{out}");
    assert!(
        out.contains("gamma meeting 0.1") || out.contains("no gamma in the grid"),
        "{out}"
    );
}

#[test]
fn bundled_scenarios_are_listed_and_printable() {
    let o = run(&["scenarios"]);
    assert_eq!(o.status.code(), Some(0));
    let names: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert!(names.contains(&"threeinertia".to_string()));
    assert!(names.contains(&"joinleave".to_string()));
    let o = run(&["scenarios", "joinleave"]);
    let json: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(json["name"], "joinleave");
}
