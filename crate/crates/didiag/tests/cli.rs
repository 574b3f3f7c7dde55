use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn data(rel: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(rel).display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_didiag")).args(args).env_remove("DIDIAG_TOL").output().unwrap()
}

fn report(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stderr)))
}

fn tmp(name: &str, text: &str) -> String {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn eval_uniform() {
    let o = run(&["eval", &data("diagrams/uniform_c2.dsl")]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&o);
    assert_eq!(r["report"]["values"], serde_json::json!([0.5, 0.5]));
    assert_eq!(r["format_version"], 1);
    assert_eq!(r["config"]["seed"], 0);
}

#[test]
fn eval_chsh() {
    let o = run(&["eval", &data("diagrams/chsh.dsl"), "--bindings", &data("diagrams/chsh_optimal.bindings.json")]);
    assert_eq!(o.status.code(), Some(0));
    let v = report(&o)["report"]["scalar"].as_f64().unwrap();
    assert!((v - 0.8535533906).abs() < 1e-10, "{v}");
}

#[test]
fn eval_missing_binding_names_the_hole() {
    let o = run(&["eval", &data("diagrams/chsh.dsl")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`state`"));
    assert!(o.stdout.is_empty());
}

#[test]
fn eval_parse_error_is_positioned() {
    let p = tmp("bad.dsl", "uniform C2 1 ;\nfrob C2\n");
    let o = run(&["eval", &p]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("2:"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn eval_rejects_unknown_binding_fields() {
    let p = tmp("extra.json", r#"{"bindings": {}, "colour": "red"}"#);
    let o = run(&["eval", &data("diagrams/uniform_c2.dsl"), "--bindings", &p]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_theorem_script() {
    let o = run(&["check", &data("scripts/theorem_ure_k2.json"), "--eps", "exp2:1:1"]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&o);
    assert_eq!(r["report"]["verdict"], "verified");
    assert_eq!(r["report"]["total"], "eps(1,N) + eps(2,N) + eps(4,N) + eps(8,N)");
    assert_eq!(r["report"]["budget_value"], 0.81640625);
}

#[test]
fn check_tampered_location_fails_at_that_step() {
    let mut s: Value = serde_json::from_str(&std::fs::read_to_string(data("scripts/lemma_sm.json")).unwrap()).unwrap();
    s["steps"][2]["location"] = serde_json::json!([7, 3]);
    let p = tmp("tampered.json", &s.to_string());
    let o = run(&["check", &p]);
    assert_eq!(o.status.code(), Some(1));
    let r = report(&o);
    assert_eq!(r["report"]["verdict"], "failed");
    assert_eq!(r["report"]["failures"][0]["step"], 2);
}

#[test]
fn check_empty_script() {
    let p = tmp("empty.json", r#"{"name": "empty", "initial": "uniform C2 1", "steps": [], "claimed_total": {"terms": []}}"#);
    let o = run(&["check", &p, "--eps", "exp2:1:1"]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&o);
    assert_eq!(r["report"]["budget_value"], 0.0);
    assert_eq!(r["report"]["total"], "0");
}

#[test]
fn check_bad_eps_is_usage_error() {
    let o = run(&["check", &data("scripts/lemma_sm.json"), "--eps", "cubic:1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible_and_echoes_config() {
    let args = ["simulate", "--rounds", "500", "--seed", "7"];
    let (a, b) = (run(&args), run(&args));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let r = report(&a);
    assert_eq!(r["config"]["seed"], 7);
    assert_eq!(r["config"]["options"]["rounds"], 500);
    assert_eq!(r["report"]["rng_seed"], 7);
    assert_eq!(r["report"]["transcript"].as_array().unwrap().len(), 500);
    assert_ne!(run(&["simulate", "--rounds", "500", "--seed", "8"]).stdout, a.stdout);
}

#[test]
fn simulate_with_shipped_strategy_file() {
    let o = run(&["simulate", "--strategy", &data("strategies/all_zero.json"), "--runs", "40"]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&o);
    assert_eq!(r["report"]["strategy"], "all_zero");
    assert!(r["report"]["abort_frequency"].as_f64().unwrap() > 0.9);
    assert!((r["report"]["game_value"].as_f64().unwrap() - 0.75).abs() < 1e-12);
}

#[test]
fn simulate_bad_config_is_usage_error() {
    assert_eq!(run(&["simulate", "--q", "0"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--chi", "0.2"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--mode", "pipeline", "--ratio", "3", "--n", "1"]).status.code(), Some(2));
}

#[test]
fn entropy_diagonal_example() {
    let o = run(&["entropy", &data("states/diagonal.json")]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&o);
    // branches diag(.30,.10), diag(.05,.25), diag(.20,.10): best guesses .30 + .25
    assert_eq!(r["report"]["method"], "diagonal");
    assert!((r["report"]["h_min"].as_f64().unwrap() + 0.55f64.log2()).abs() < 1e-12);
}

#[test]
fn extract_enumerated_source() {
    let o = run(&["extract", "source", "--n", "8", "--m", "2", "--h", "4", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let r = &report(&o)["report"];
    assert_eq!(r["support"].as_array().unwrap().len(), 16);
    assert!(r["distance"].as_f64().unwrap() <= r["bound"].as_f64().unwrap());
    assert_eq!(r["bound"], 0.25);
}

#[test]
fn extract_toeplitz_fixture() {
    // seed 110100, T rows 0100 / 1010 / 1101, x = 0111
    let o = run(&["extract", "toeplitz", "--source", "7", "--seed-bits", "d0", "--n", "4", "--m", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(&o)["report"]["output"], "110");
}

#[test]
fn rules_self_test() {
    let o = run(&["rules"]);
    assert_eq!(o.status.code(), Some(0));
    let r = &report(&o)["report"];
    assert_eq!(r["failures"], 0);
    let names: Vec<&str> = r["rules"].as_array().unwrap().iter().map(|x| x["name"].as_str().unwrap()).collect();
    assert_eq!(names, didiag::rewrite::rule_names());
}

#[test]
fn out_flag_and_env_tolerance() {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let out = dir.join("entropy_report.json");
    let o = Command::new(env!("CARGO_BIN_EXE_didiag"))
        .args(["entropy", &data("states/helstrom.json"), "--out", &out.display().to_string()])
        .env("DIDIAG_TOL", "1e-6")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["config"]["tol"], 1e-6);
    assert_eq!(r["config"]["command"], "entropy");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["eval", "/nonexistent.dsl"]).status.code(), Some(2));
    assert_eq!(run(&["--tol", "-1", "rules"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
