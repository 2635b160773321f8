use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Fixture { dir: tempfile::tempdir().unwrap() };
        f.write("nullstep_b2.json", r#"{"type":"linear","coeffs":[1,0,-1],"target":2,"horizon":40}"#);
        f.write("hole.json", r#"{"type":"explicit","accessible":[[0,0],[1,0],[0,1],[2,0],[0,2]]}"#);
        f.write("stop2.json", r#"{"type":"explicit","accessible":[[0,0],[1,0],[0,1]]}"#);
        f.write("curtailed.json", r#"{"type":"explicit","accessible":[[0,0],[1,0],[0,1],[1,1]]}"#);
        f.write("lattice_b10.json", r#"{"type":"linear","coeffs":[1,0,-1,0],"target":10,"horizon":1000000}"#);
        f.write("t1.json", r#"{"p":[0.4,0.15,0.3,0.15]}"#);
        f.write("exact2.json", r#"{"p":["1/3","2/3"],"labels":["success","failure"]}"#);
        f.write(
            "d.json",
            r#"{"stages":[{"n":3,"promising":{"r_min":3,"e_max":0},"ineffective":{"r_max":0,"e_min":2}},{"n":3,"final":{"promising":{"r_min":4,"e_max":1}}}]}"#,
        );
        std::fs::create_dir(f.path("regions")).unwrap();
        f.write("regions/trial.json", r#"{"type":"trial","design":"../d.json"}"#);
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, body: &str) {
        std::fs::write(self.path(name), body).unwrap();
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_stopwalk"))
            .current_dir(self.dir.path())
            .env_remove("STOPWALK_THREADS")
            .args(args)
            .output()
            .unwrap()
    }

    fn json(&self, args: &[&str]) -> Value {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice(&out.stdout).unwrap()
    }
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn estimate_prints_exact_pair() {
    let f = Fixture::new();
    let out = f.run(&["estimate", "--region", "nullstep_b2.json", "--horizon", "40", "--observation", "3,0,1"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "{\"unbiased\":[\"1/2\",\"0\",\"1/2\"],\"ml\":[\"3/4\",\"0\",\"1/4\"]}\n");
    let closed = f.run(&["estimate", "--closed-form", "nullstep", "--b", "2", "--observation", "3,0,1"]);
    assert_eq!(stdout(&closed), stdout(&out));
    let both = f.run(&["estimate", "--closed-form", "nullstep", "--region", "nullstep_b2.json", "--observation", "3,0,1"]);
    assert_eq!(stdout(&both), stdout(&out));
}

#[test]
fn simple_failure_exits_one_with_json_error() {
    let f = Fixture::new();
    let out = f.run(&["verify", "simple", "--region", "hole.json", "--horizon", "3"]);
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["verdict"], "FAIL");
    assert_eq!(report["violations"][0]["order"], 2);
    assert_eq!(report["violations"][0]["point"], "(1,1)");
    assert_eq!(stderr_json(&out)["error"], "check_failed");

    let pass = f.json(&["verify", "simple", "--region", "nullstep_b2.json", "--horizon", "12", "--certificates"]);
    assert_eq!(pass["verdict"], "PASS");
    assert_eq!(pass["certificates_verified"], true);
    assert_eq!(pass["horizon_limited"], true);
    assert_eq!(pass["certificates"].as_array().unwrap().len(), pass["separations"].as_u64().unwrap() as usize);
}

#[test]
fn usage_errors_exit_two() {
    let f = Fixture::new();
    assert_eq!(f.run(&["estimate", "--observation", "3,0,1"]).status.code(), Some(2));
    assert_eq!(f.run(&["bogus"]).status.code(), Some(2));
    assert_eq!(f.run(&["count", "--region", "hole.json"]).status.code(), Some(2));
    assert_eq!(f.run(&["trial", "estimate", "--design", "d.json", "--terminal", "r=4,e=1"]).status.code(), Some(2));
    let mismatch = f.run(&[
        "estimate", "--closed-form", "nullstep", "--b", "3", "--region", "nullstep_b2.json", "--observation", "3,0,1",
    ]);
    assert_eq!(mismatch.status.code(), Some(2));
    assert_eq!(stderr_json(&mismatch)["error"], "usage");
    let threads = Command::new(env!("CARGO_BIN_EXE_stopwalk"))
        .current_dir(f.dir.path())
        .env("STOPWALK_THREADS", "zero")
        .args(["validate", "--region", "hole.json"])
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn computation_errors_exit_one() {
    let f = Fixture::new();
    let missing = f.run(&["validate", "--region", "nope.json"]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(stderr_json(&missing)["error"], "io");
    let not_boundary = f.run(&["estimate", "--region", "nullstep_b2.json", "--observation", "1,0,0"]);
    assert_eq!(not_boundary.status.code(), Some(1));
    assert_eq!(stderr_json(&not_boundary)["error"], "not_boundary");
    f.write("origin_out.json", r#"{"type":"linear","coeffs":[1,0,-1],"target":0,"horizon":5}"#);
    let bad = f.run(&["validate", "--region", "origin_out.json"]);
    assert_eq!(stderr_json(&bad)["error"], "origin_not_accessible");
}

#[test]
fn emitted_table_round_trips() {
    let f = Fixture::new();
    let count = f.json(&["count", "--region", "nullstep_b2.json", "--horizon", "12", "--point", "3,0,1", "--emit", "table.json"]);
    assert_eq!(count["k"], "2");
    assert_eq!(count["k_star"], serde_json::json!(["1", "0", "1"]));
    let from_table = f.run(&["estimate", "--table", "table.json", "--observation", "3,0,1"]);
    let from_region = f.run(&["estimate", "--region", "nullstep_b2.json", "--observation", "3,0,1"]);
    assert_eq!(stdout(&from_table), stdout(&from_region));

    let once = f.run(&["inspect", "table.json"]);
    assert!(once.status.success());
    f.write("table2.json", &stdout(&once));
    assert_eq!(stdout(&f.run(&["inspect", "table2.json"])), stdout(&once));
}

#[test]
fn inspect_is_idempotent_for_every_input_kind() {
    let f = Fixture::new();
    for name in ["t1.json", "exact2.json", "nullstep_b2.json", "hole.json", "d.json"] {
        let once = f.run(&["inspect", name]);
        assert!(once.status.success(), "{name}: {}", String::from_utf8_lossy(&once.stderr));
        let copy = format!("copy_{name}");
        f.write(&copy, &stdout(&once));
        assert_eq!(stdout(&f.run(&["inspect", &copy])), stdout(&once), "{name}");
    }
    assert_eq!(f.json(&["inspect", "d.json"]), serde_json::from_str::<Value>(&std::fs::read_to_string(f.path("d.json")).unwrap()).unwrap());
    assert_eq!(f.json(&["inspect", "exact2.json"])["p"], serde_json::json!(["1/3", "2/3"]));
}

fn rendered_strings(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::String(s) => out.push(s.clone()),
        Value::Array(a) => a.iter().for_each(|x| rendered_strings(x, out)),
        Value::Object(o) => o.values().for_each(|x| rendered_strings(x, out)),
        _ => {}
    }
}

#[test]
fn rendering_modes_never_mix() {
    let f = Fixture::new();
    let is_exact = |s: &str| s.split('/').all(|part| !part.is_empty() && part.trim_start_matches('-').chars().all(|c| c.is_ascii_digit()));
    let is_decimal = |s: &str| s.contains('.') && !s.contains('/');
    let exact = f.json(&["trial", "estimate", "--design", "d.json", "--terminal", "r=4,e=1,stage=2"]);
    let decimal = f.json(&["--digits", "4", "trial", "estimate", "--design", "d.json", "--terminal", "r=4,e=1,stage=2"]);
    for (key, check) in [("unbiased", &is_exact as &dyn Fn(&str) -> bool), ("ml", &is_exact)] {
        let mut strings = Vec::new();
        rendered_strings(&exact[key], &mut strings);
        assert!(strings.iter().all(|s| check(s)), "{strings:?}");
    }
    let mut strings = Vec::new();
    rendered_strings(&decimal["unbiased"], &mut strings);
    rendered_strings(&decimal["ml"], &mut strings);
    assert!(strings.iter().all(|s| is_decimal(s)), "{strings:?}");
    assert_eq!(decimal["unbiased"]["response"], "0.5833");
}

#[test]
fn closedness_verdicts() {
    let f = Fixture::new();
    let exact = f.json(&["verify", "closed", "--region", "stop2.json", "--model", "exact2.json", "--horizon", "2"]);
    assert_eq!(exact["verdict"], "closed_exact");
    assert_eq!(exact["absorbed_mass"], "1");
    assert_eq!(exact["residual_mass"], "0");
    assert_eq!(exact["threshold"], "1/20");

    f.write("ns10.json", r#"{"type":"linear","coeffs":[1,0,-1],"target":10,"horizon":500}"#);
    f.write("m3.json", r#"{"p":[0.4,0.3,0.3]}"#);
    let numeric = f.json(&["verify", "closed", "--region", "ns10.json", "--model", "m3.json", "--horizon", "500"]);
    assert_eq!(numeric["verdict"], "closed_numerically");
    let short = f.run(&["verify", "closed", "--region", "ns10.json", "--model", "m3.json", "--horizon", "20"]);
    assert_eq!(short.status.code(), Some(1));
    assert_eq!(serde_json::from_slice::<Value>(&short.stdout).unwrap()["verdict"], "inconclusive");
}

#[test]
fn unbiasedness_check_and_ml_control() {
    let f = Fixture::new();
    let args = ["verify", "unbiased", "--region", "curtailed.json", "--horizon", "3", "--p", "1/3,2/3", "--p", "1/5,4/5"];
    let ok = f.json(&args);
    assert_eq!(ok["holds"], true);
    assert_eq!(ok["checks"].as_array().unwrap().len(), 4);
    let mut ml_args = args.to_vec();
    ml_args.extend(["--estimator", "ml"]);
    let control = f.run(&ml_args);
    assert_eq!(control.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&control.stdout).unwrap();
    assert_eq!(report["failing_points"].as_array().unwrap().len(), 2);
}

#[test]
fn trial_commands_agree_with_general_estimator() {
    let f = Fixture::new();
    let validate = f.json(&["trial", "validate", "--design", "d.json"]);
    assert_eq!(validate["stop_states"], 28);
    assert_eq!(validate["cumulative"], serde_json::json!([3, 6]));
    let est = f.json(&["trial", "estimate", "--design", "d.json", "--terminal", "r=4,e=1,stage=2"]);
    assert_eq!(est["decision"], "promising");
    let general = f.json(&["estimate", "--region", "regions/trial.json", "--observation", "4,1,1"]);
    let u = &est["unbiased"];
    assert_eq!(general["unbiased"], serde_json::json!([u["response"], u["non_response"], u["progression"]]));
    let verify = f.json(&["trial", "verify", "--design", "d.json", "--p", "1/3,1/3,1/3"]);
    assert_eq!(verify["holds"], true);
    assert_eq!(verify["mass"], "1");
    assert_eq!(f.run(&["trial", "estimate", "--design", "d.json", "--terminal", "r=1,e=1,stage=1"]).status.code(), Some(1));
}

#[test]
fn validate_reports_overshoot_warning() {
    let f = Fixture::new();
    f.write("steep.json", r#"{"type":"linear","coeffs":[2,0,-1],"target":3,"horizon":10}"#);
    let report = f.json(&["validate", "--region", "steep.json"]);
    assert!(!report["warnings"].as_array().unwrap().is_empty());
    assert_eq!(report["dim"], 3);
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![reader.headers().unwrap().iter().map(String::from).collect()];
    rows.extend(reader.records().map(|r| r.unwrap().iter().map(String::from).collect()));
    rows
}

#[test]
fn simulate_writes_summary_and_per_path_csv() {
    let f = Fixture::new();
    let out = f.run(&[
        "simulate", "--model", "t1.json", "--region", "lattice_b10.json", "--paths", "100", "--seed", "7",
        "--out", "summary.csv", "--per-path", "paths.csv",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = csv_rows(&f.path("summary.csv"));
    assert_eq!(summary[0], ["category", "estimator", "mean", "sd", "mse", "n_absorbed", "n_failed", "seed"]);
    assert_eq!(summary.len(), 9);
    assert!(summary[1..].iter().all(|r| r[5] == "100" && r[6] == "0" && r[7] == "7"));
    let per_path = csv_rows(&f.path("paths.csv"));
    assert_eq!(per_path.len(), 101);
    assert_eq!(per_path[0].len(), 4 + 8);

    let stdout_run = f.run(&["simulate", "--model", "t1.json", "--region", "lattice_b10.json", "--paths", "100", "--seed", "7"]);
    assert_eq!(stdout_run.stdout, std::fs::read(f.path("summary.csv")).unwrap());

    let ml_only = f.run(&[
        "simulate", "--model", "t1.json", "--region", "lattice_b10.json", "--paths", "50", "--estimators", "ml",
    ]);
    assert_eq!(stdout(&ml_only).lines().count(), 5);
}

#[test]
fn simulate_refuses_runaway_table() {
    let f = Fixture::new();
    f.write("other.json", r#"{"type":"linear","coeffs":[1,-1,0,0],"target":10,"horizon":1000000}"#);
    let out = f.run(&["simulate", "--model", "t1.json", "--region", "other.json", "--paths", "10"]);
    assert_eq!(out.status.code(), Some(2));
}
