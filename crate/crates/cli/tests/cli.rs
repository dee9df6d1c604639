use std::process::{Command, Output};

use serde_json::{json, Value};

const X3: &str = r#"{"points":["a","b","c"],"dist":[["a","b","1/2"],["b","c","1/2"],["a","c","1"]]}"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convexhk")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Value {
    let out = run(args);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn domain_error(args: &[&str]) -> Value {
    let out = run(args);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    serde_json::from_slice::<Value>(&out.stdout).unwrap()["error"].clone()
}

#[test]
fn kantorovich_reports_value_and_coupling() {
    let v = ok(&["kantorovich", "--space", X3, "--left", r#"{"a":"1"}"#, "--right", r#"{"b":"1/2","c":"1/2"}"#]);
    assert_eq!(v, json!({"value": "3/4", "witness": [["a", "b", "1/2"], ["a", "c", "1/2"]]}));
}

#[test]
fn hk_of_a_segment_and_its_midpoint() {
    let v = ok(&["hk", "--space", X3, "--left", r#"[{"a":1},{"b":1}]"#, "--right", r#"[{"a":"1/2","b":"1/2"}]"#]);
    assert_eq!(v, json!({"value": "1/4", "directed": ["1/4", "0"]}));
}

#[test]
fn hausdorff_on_labels() {
    let v = ok(&["hausdorff", "--space", X3, "--left", r#"["a"]"#, "--right", r#"["b","c"]"#]);
    assert_eq!(v, json!({"value": "1"}));
}

#[test]
fn base_drops_interior_generators() {
    let v = ok(&["base", "--space", X3, "--set", r#"[{"a":1},{"b":1},{"a":"1/2","b":"1/2"}]"#]);
    assert_eq!(v, json!({"generators": [{"a": "1"}, {"b": "1"}]}));
}

#[test]
fn normalize_distributes() {
    let v = ok(&["normalize", "--space", X3, "--term", "(p+ 1/2 a (oplus b c))"]);
    assert_eq!(v["nu"], json!("(oplus (p+ 1/2 a b) (p+ 1/2 a c))"));
    assert_eq!(v["set"], json!({"generators": [{"a": "1/2", "b": "1/2"}, {"a": "1/2", "c": "1/2"}]}));
}

#[test]
fn mu_flattens() {
    let set = r#"[[{"set":[{"a":"1"}],"weight":"1/2"},{"set":[{"b":"1"},{"c":"1"}],"weight":"1/2"}]]"#;
    let v = ok(&["mu", "--space", X3, "--set", set]);
    assert_eq!(v, json!({"generators": [{"a": "1/2", "b": "1/2"}, {"a": "1/2", "c": "1/2"}]}));
}

#[test]
fn term_distance() {
    assert_eq!(ok(&["tdist", "--space", X3, "a", "(oplus a b)"]), json!({"value": "1/2"}));
    assert_eq!(ok(&["tdist", "--space", X3, "a", "a"]), json!({"value": "0"}));
}

#[test]
fn derive_then_check() {
    let d = ok(&["derive", "--space", X3, "--left", r#"[{"a":1},{"b":1}]"#, "--right", r#"[{"a":"1/2","b":"1/2"}]"#]);
    assert_eq!(d["conclusion"]["eps"], json!("1/4"));
    let proof = d.to_string();
    let c = ok(&["check", "--space", X3, "--proof", &proof]);
    assert_eq!(c["valid"], json!(true));
    assert_eq!(c["conclusion"], d["conclusion"]);

    let mut bad = d.clone();
    bad["conclusion"]["eps"] = json!("1/8");
    let e = domain_error(&["check", "--space", X3, "--proof", &bad.to_string()]);
    assert_eq!(e["kind"], json!("InvalidDerivation"));
    assert_eq!(e["path"], json!([]));
}

#[test]
fn derive_between_points_is_an_assumption() {
    let d = ok(&["derive", "--space", X3, "--dists", "--left", r#"{"a":1}"#, "--right", r#"{"b":1}"#]);
    assert_eq!(d, json!({"conclusion": {"eps": "1/2", "l": "a", "r": "b"}, "premises": [], "rule": "Assum"}));
}

#[test]
fn space_and_file_arguments() {
    let dir = std::env::temp_dir().join(format!("convexhk-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("x3.json");
    std::fs::write(&path, X3).unwrap();
    let v = ok(&["validate-space", "--space", path.to_str().unwrap()]);
    assert_eq!(v["valid"], json!(true));
    let (da, db) = (dir.join("da.json"), dir.join("db.json"));
    std::fs::write(&da, r#"{"a":"1"}"#).unwrap();
    std::fs::write(&db, r#"{"b":"1"}"#).unwrap();
    let files = [path.to_str().unwrap(), da.to_str().unwrap(), db.to_str().unwrap()];
    let v = ok(&["kantorovich", "--space", files[0], "--left", files[1], "--right", files[2]]);
    assert_eq!(v, json!({"value": "1/2", "witness": [["a", "b", "1"]]}));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn harness_commands() {
    let laws = ok(&["laws", "--seed", "3", "--trials", "20"]);
    assert_eq!(laws["passed"], json!(true));
    let rt = ok(&["roundtrip", "--space", X3, "--samples", "10", "--seed", "1"]);
    assert_eq!(rt["passed"], json!(true));
    assert_eq!(rt["gf_mismatches"], json!([]));
}

#[test]
fn domain_errors_exit_one() {
    let bad_space = r#"{"points":["a","b","c"],"dist":[["a","b","1/4"],["b","c","1/4"],["a","c","1"]]}"#;
    assert_eq!(domain_error(&["validate-space", "--space", bad_space])["kind"], json!("AxiomViolation"));
    let e = domain_error(&["plusp", "--space", X3, "--left", r#"[{"a":1}]"#, "--right", r#"[{"b":1}]"#, "--p", "3/2"]);
    assert_eq!(e["kind"], json!("BadProbability"));
    assert_eq!(domain_error(&["hk", "--space", X3, "--left", "/nonexistent/x.json", "--right", "[]"])["kind"], json!("Io"));
    let e = domain_error(&["kantorovich", "--space", X3, "--left", r#"{"z":1}"#, "--right", r#"{"a":1}"#]);
    assert_eq!(e["kind"], json!("UnknownPoint"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["hk", "--space", X3]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn output_is_byte_stable() {
    let args = ["derive", "--space", X3, "--left", r#"[{"a":1},{"c":1}]"#, "--right", r#"[{"b":1}]"#];
    assert_eq!(run(&args).stdout, run(&args).stdout);
}
