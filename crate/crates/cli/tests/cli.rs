use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn nlpflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlpflow")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn problems_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems")
}

const EXAMPLE1: [&str; 8] = [
    "--problem",
    "example1",
    "--pts",
    "1,2,3;4,5",
    "--t-end",
    "300",
    "--k-theta",
    "0.1",
];

#[test]
fn list_shows_every_builtin() {
    let o = nlpflow(&["list"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["example1", "example2", "ec-quadratic", "unconstrained-quadratic"] {
        assert!(text.contains(name), "{text}");
    }
    let o = nlpflow(&["list", "--json"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let names: Vec<&str> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["name"].as_str().unwrap())
        .collect();
    assert_eq!(
        names,
        ["example1", "example2", "ec-quadratic", "unconstrained-quadratic"]
    );
    assert_eq!(v[1]["dims"]["r"], 200);
}

#[test]
fn run_example1_writes_trajectory_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut args = vec![
        "run",
        "--theta0=-4.8578,3.8180,-2.7364",
        "--fixed-horizon",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend(EXAMPLE1);
    let o = nlpflow(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("example1: converged at tau 300"));

    let s = read_json(&out.join("summary.json"));
    assert_eq!(s["schema_version"], 1);
    assert_eq!(s["verdict"], "converged");
    assert!(s["error"].as_f64().unwrap() <= 1e-6);
    assert!((s["final_state"]["pi_e"][0].as_f64().unwrap() - 0.35).abs() <= 0.01);
    assert_eq!(s["config"]["pts_groups"], serde_json::json!([[1, 2, 3], [4, 5]]));
    assert_eq!(s["config"]["integrator"]["method"], "explicit-rk45");
    assert_eq!(s["seed"], 0);
    assert!(s["wall_time_s"].as_f64().unwrap() >= 0.0);

    let mut csv = csv::Reader::from_path(out.join("trajectory.csv")).unwrap();
    let header: Vec<String> = csv.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header.len(), 1 + 3 + 2 + 5 + 4);
    assert_eq!(header[0], "tau");
    assert_eq!(header[4], "pi_e_1");
    assert_eq!(header[14], "lyapunov");
    let rows: Vec<csv::StringRecord> = csv.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), s["counts"]["samples"].as_u64().unwrap() as usize);
    assert_eq!(rows.last().unwrap()[0].parse::<f64>().unwrap(), 300.0);
}

#[test]
fn start_at_the_optimum_converges_immediately() {
    let o = nlpflow(&["run", "--problem", "example1", "--theta0", "2,0.5,0.5"]);
    assert!(o.status.success());
    let s: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(s["verdict"], "converged");
    assert!(s["counts"]["accepted_steps"].as_u64().unwrap() <= 3);
}

#[test]
fn malformed_problem_file_is_reported_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.nlp");
    std::fs::write(&path, "var 2\nmin x1 +\n").unwrap();
    let o = nlpflow(&["run", "--problem", path.to_str().unwrap(), "--theta0", "0,0"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("bad.nlp") && err.contains("line 2, column"), "{err}");
}

#[test]
fn bad_arguments_exit_nonzero() {
    let cases: [&[&str]; 5] = [
        &["run", "--problem", "nope", "--theta0", "1"],
        &["run", "--problem", "example1", "--theta0", "1,2"],
        &["run", "--problem", "example1", "--theta0", "1,2,3", "--pts", "1,2;3"],
        &["run", "--problem", "example1", "--theta0", "1,2,3", "--rel-tol", "-1"],
        &["run", "--problem", "example1", "--theta0", "sample:3,1"],
    ];
    for args in cases {
        let o = nlpflow(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error: "), "{args:?}");
    }
}

#[test]
fn file_problems_are_named_after_the_file() {
    let path = problems_dir().join("ec_quadratic.nlp");
    let o = nlpflow(&[
        "run",
        "--problem",
        path.to_str().unwrap(),
        "--theta0",
        "0,0",
        "--k-theta",
        "1",
        "--k-h",
        "1",
        "--rel-tol",
        "1e-8",
        "--abs-tol",
        "1e-10",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(s["problem"], "ec_quadratic");
    assert_eq!(s["verdict"], "converged");
    assert!(s["error"].is_null());
    let theta: Vec<f64> = serde_json::from_value(s["final_state"]["theta"].clone()).unwrap();
    assert!(theta.iter().all(|x| (x - 1.0).abs() <= 1e-6), "{theta:?}");
}

#[test]
fn gains_file_overrides_scalars() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gains.json");
    std::fs::write(&path, r#"{"k_theta": [[1, 0], [0, 2]], "k_h": 3}"#).unwrap();
    let o = nlpflow(&[
        "run",
        "--problem",
        "ec-quadratic",
        "--theta0",
        "0,0",
        "--gains",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(
        s["config"]["gains"]["k_theta"],
        serde_json::json!([[1.0, 0.0], [0.0, 2.0]])
    );
    assert_eq!(s["config"]["gains"]["k_h"], serde_json::json!([[3.0]]));
}

#[test]
fn identical_seeds_replay_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let mut args = vec![
            "run",
            "--theta0",
            "sample:-10,10",
            "--seed",
            seed,
            "--sample-stride",
            "1",
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend(EXAMPLE1);
        assert!(nlpflow(&args).status.success());
        std::fs::read(out.join("trajectory.csv")).unwrap()
    };
    let a = run("a", "42");
    assert_eq!(a, run("b", "42"));
    assert_ne!(a, run("c", "43"));
}

#[test]
fn multistart_reproduces_the_example1_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ms");
    let mut args = vec![
        "multistart",
        "--count",
        "10",
        "--theta0",
        "sample:-10,10",
        "--fixed-horizon",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend(EXAMPLE1);
    let o = nlpflow(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.contains("average") && table.contains("max"), "{table}");

    let s = read_json(&out.join("summary.json"));
    assert_eq!(s["count"], 10);
    assert_eq!(s["failures"], 0);
    assert!(s["error"]["max"].as_f64().unwrap() <= 1e-6);
    let rows = csv::Reader::from_path(out.join("multistart.csv"))
        .unwrap()
        .records()
        .count();
    assert_eq!(rows, 10);
}

#[test]
fn first_multistart_run_matches_a_single_run() {
    let common = [
        "--problem",
        "ec-quadratic",
        "--theta0",
        "sample:-3,3",
        "--seed",
        "9",
        "--k-theta",
        "1",
    ];
    let single: Value = serde_json::from_str(&stdout(&nlpflow(&[&["run"], &common[..]].concat()))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ms");
    let o = nlpflow(
        &[
            &["multistart", "--count", "1", "--out", out.to_str().unwrap()],
            &common[..],
        ]
        .concat(),
    );
    assert!(o.status.success());
    let multi = read_json(&out.join("summary.json"));
    assert_eq!(multi["runs"][0]["theta0"], single["theta0"]);
    assert_eq!(multi["runs"][0]["error"], single["error"]);
}
