use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn mrplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrplan"))
        .args(args)
        .env_remove("MRPLAN_API_KEY")
        .output()
        .expect("mrplan runs")
}

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(rel)
}

fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

#[test]
fn plan_writes_dot_for_a_scripted_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let dot = tmp.path().join("g.dot");
    let scenario = data("scenarios/env_a/stack-then-corners.json");
    let o = mrplan(&["plan", "--env", "A", "--scenario", s(&scenario), "--out", s(&dot)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("0: pick_and_place(red block, middle)"), "{stdout}");
    assert!(stdout.contains("  0 -> 1\n"), "{stdout}");
    let text = fs::read_to_string(&dot).unwrap();
    assert!(text.starts_with("digraph"));
    assert!(text.contains("0 -> 1;"));
}

#[test]
fn plan_takes_env_from_the_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let dot = tmp.path().join("g.dot");
    let scenario = data("scenarios/env_b/fetch-from-shelf.json");
    let o = mrplan(&["plan", "--scenario", s(&scenario), "--out", s(&dot)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dot.exists());
}

#[test]
fn missing_env_file_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mrplan(&[
        "plan",
        "--env",
        s(&tmp.path().join("nope.json")),
        "--instruction",
        "x",
        "--out",
        s(&tmp.path().join("g.dot")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ConfigError"));
}

#[test]
fn always_cyclic_script_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let script = write_json(
        tmp.path(),
        "mock.json",
        &json!({
            "plans": {"stack": ["pick_and_place(red block, middle)", "pick_and_place(yellow block, red block)", "done()"]},
            "completions": {"stack": ["0 -> 1\n1 -> 0"]}
        }),
    );
    let o = mrplan(&[
        "plan",
        "--env",
        "A",
        "--instruction",
        "stack",
        "--mock-script",
        s(&script),
        "--out",
        s(&tmp.path().join("g.dot")),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("CyclicAfterRetries"));
    assert!(!tmp.path().join("g.dot").exists());
}

#[test]
fn endless_plan_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let plan: Vec<&str> = vec!["pick_and_place(red block, middle)"; 5];
    let script = write_json(tmp.path(), "mock.json", &json!({"plans": {"loop": plan}}));
    let o = mrplan(&[
        "plan", "--env", "A", "--instruction", "loop", "--mock-script", s(&script), "--max-len", "3",
        "--out", s(&tmp.path().join("g.dot")),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("DecodeOverflow"));
}

#[test]
fn unreachable_http_backend_exits_5() {
    let tmp = tempfile::tempdir().unwrap();
    // bind then drop to get a port with nothing listening
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let endpoint = format!("http://127.0.0.1:{port}/v1/completions");
    let scenario = data("scenarios/env_a/red-to-middle.json");
    let out = tmp.path().join("out");
    let o = mrplan(&[
        "run", "--scenario", s(&scenario), "--scorer", "http", "--endpoint", &endpoint, "--model", "m",
        "--retries", "0", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    let trace: Value = serde_json::from_slice(&fs::read(out.join("red-to-middle.json")).unwrap()).unwrap();
    assert_eq!(trace["outcome"]["reason"], "backend_unavailable");
}

#[test]
fn http_without_endpoint_is_a_config_error() {
    let scenario = data("scenarios/env_a/red-to-middle.json");
    let o = mrplan(&["run", "--scenario", s(&scenario), "--scorer", "http"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn api_key_is_not_a_flag() {
    let o = mrplan(&["run", "--scenario", "x", "--api-key", "secret"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--api-key"));
}

#[test]
fn stack_then_corners_matches_its_golden_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = data("scenarios/env_a/stack-then-corners.json");
    let o = mrplan(&["run", "--env", "A", "--scenario", s(&scenario), "--out", s(tmp.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let got = fs::read_to_string(tmp.path().join("stack-then-corners.json")).unwrap();
    let want = fs::read_to_string(golden().join("traces/stack-then-corners.json")).unwrap();
    assert_eq!(got, want);
}

#[test]
fn seed_does_not_change_mock_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = data("scenarios/env_a/two-stacks-after-retry.json");
    for seed in ["7", "8"] {
        let o = mrplan(&["run", "--scenario", s(&scenario), "--seed", seed, "--out", s(&tmp.path().join(seed))]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |seed: &str| fs::read(tmp.path().join(seed).join("two-stacks-after-retry.json")).unwrap();
    assert_eq!(read("7"), read("8"));
}

#[test]
fn failing_scenario_exit_code_follows_its_reason() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_json(
        tmp.path(),
        "wrong.json",
        &json!({
            "name": "wrong-block", "env": "A", "instruction": "red to the middle",
            "goal": [{"at": ["red block", "middle"]}], "min_steps": 1,
            "mock": {"plan": ["pick_and_place(blue block, middle)"]}
        }),
    );
    let out = tmp.path().join("out");
    let o = mrplan(&["run", "--scenario", s(&scenario), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(9), "{}", stderr(&o));
    assert!(out.join("wrong-block.json").exists());
}

#[test]
fn duplicate_scenario_names_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let v = json!({"name": "same", "env": "A", "instruction": "x", "goal": [], "min_steps": 1});
    write_json(tmp.path(), "a.json", &v);
    write_json(tmp.path(), "b.json", &v);
    let o = mrplan(&["run", "--scenario", s(tmp.path()), "--out", s(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_of_golden_traces_matches_golden_report() {
    let tmp = tempfile::tempdir().unwrap();
    let report = tmp.path().join("report.json");
    let o = mrplan(&["eval", s(&golden().join("traces")), "--out", s(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(&report).unwrap(),
        fs::read_to_string(golden().join("report.json")).unwrap()
    );
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("label"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn report_spl_never_exceeds_success_rate() {
    let report: Value = serde_json::from_slice(&fs::read(golden().join("report.json")).unwrap()).unwrap();
    for row in report["rows"].as_array().unwrap() {
        assert!(row["spl"].as_f64().unwrap() <= row["success_rate"].as_f64().unwrap());
    }
}

#[test]
fn eval_skips_an_existing_report() {
    let tmp = tempfile::tempdir().unwrap();
    for f in ["tower.json", "red-to-middle.json"] {
        fs::copy(golden().join("traces").join(f), tmp.path().join(f)).unwrap();
    }
    for _ in 0..2 {
        let o = mrplan(&["eval", s(tmp.path())]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let report: Value = serde_json::from_slice(&fs::read(tmp.path().join("report.json")).unwrap()).unwrap();
    let trials: u64 = report["rows"].as_array().unwrap().iter().map(|r| r["trials"].as_u64().unwrap()).sum();
    assert_eq!(trials, 2);
}

#[test]
fn eval_of_empty_dir_exits_7() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mrplan(&["eval", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(7));
    assert!(stderr(&o).contains("EmptyTrials"));
}

#[test]
fn eval_rejects_malformed_traces() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.json"), "{").unwrap();
    let o = mrplan(&["eval", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
}
