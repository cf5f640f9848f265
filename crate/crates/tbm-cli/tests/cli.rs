//! End-to-end tests against the compiled binary: exit codes, output
//! formats, trace discipline, and batch/stepped agreement.

use std::path::PathBuf;
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(format!(
        "{}/../../scenarios/{name}",
        env!("CARGO_MANIFEST_DIR")
    ))
}

fn tbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tbm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf8 stdout")
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).expect("utf8 stderr")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn last_query(json: &str) -> (f64, f64) {
    let doc: serde_json::Value = serde_json::from_str(json).expect("valid json");
    let q = doc["queries"]
        .as_array()
        .expect("queries array")
        .last()
        .expect("at least one query");
    (
        q["for"].as_f64().expect("for"),
        q["against"].as_f64().expect("against"),
    )
}

#[test]
fn met_expectations_exit_zero() {
    let out = tbm(&["run", scenario("variant1.tbm").to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("query (alive fred) @ 10512060"));
    assert!(!stdout(&out).contains("EXPECT FAILED"));
}

#[test]
fn failed_expectations_exit_one() {
    // Batched, the late-load file's first expectation cannot hold: both
    // queries run after all events.
    let out = tbm(&["run", scenario("variant2-then-load.tbm").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("EXPECT FAILED"));
}

#[test]
fn stepped_replay_meets_every_expectation() {
    let out = tbm(&[
        "run",
        "--stepped",
        scenario("variant2-then-load.tbm").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(!stdout(&out).contains("EXPECT FAILED"));
}

#[test]
fn parse_errors_exit_two_with_a_position() {
    let dir = std::env::temp_dir();
    let path = dir.join("tbm_cli_test_bad.tbm");
    std::fs::write(&path, "(point a :origin)\n(point a :origin)\n").unwrap();
    let out = tbm(&["run", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("duplicate name `a` at 2:8"));

    std::fs::write(&path, "(event (hit x) :at nowhere :strength (1 0))\n").unwrap();
    let out = tbm(&["check", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("undefined name `nowhere`"));

    std::fs::write(&path, "(point a :origin)(rule r :trigger (a ?x) :consequent (b ?x) :duration 5 :generator nope)").unwrap();
    let out = tbm(&["check", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unknown generator `nope`"));
}

#[test]
fn missing_files_and_bad_usage_exit_two() {
    let out = tbm(&["run", "/definitely/not/here.tbm"]);
    assert_eq!(code(&out), 2);
    let out = tbm(&["frobnicate"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn check_accepts_every_bundled_scenario() {
    for name in ["variant1.tbm", "variant2.tbm", "variant2-then-load.tbm"] {
        let out = tbm(&["check", scenario(name).to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{name}: {}", stderr(&out));
        assert!(stdout(&out).starts_with("ok: "));
    }
}

#[test]
fn json_agrees_with_text_and_round_trips() {
    let file = scenario("variant1.tbm");
    let json_out = tbm(&["run", "--format", "json", file.to_str().unwrap()]);
    assert_eq!(code(&json_out), 0);
    let (jf, ja) = last_query(&stdout(&json_out));

    // The JSON document survives a parse/serialize/parse cycle unchanged.
    let doc: serde_json::Value = serde_json::from_str(&stdout(&json_out)).unwrap();
    let again: serde_json::Value =
        serde_json::from_str(&serde_json::to_string(&doc).unwrap()).unwrap();
    assert_eq!(doc, again);

    // The text rendering shows the same numbers to its printed precision.
    let text_out = tbm(&["run", file.to_str().unwrap()]);
    let text = stdout(&text_out);
    let grab = |tag: &str| -> f64 {
        text.lines()
            .find(|l| l.trim_start().starts_with(tag))
            .and_then(|l| l.trim_start().trim_start_matches(tag).trim().parse().ok())
            .unwrap_or_else(|| panic!("no `{tag}` line in:\n{text}"))
    };
    assert!((grab("for") - jf).abs() <= 1e-11 * jf.abs().max(1.0));
    assert!((grab("against") - ja).abs() <= 1e-11 * ja.abs().max(1.0));
}

#[test]
fn batch_and_stepped_agree_on_final_strengths() {
    for name in ["variant1.tbm", "variant2.tbm", "variant2-then-load.tbm"] {
        let file = scenario(name);
        let batch = tbm(&["run", "--format", "json", file.to_str().unwrap()]);
        let stepped = tbm(&[
            "run",
            "--stepped",
            "--format",
            "json",
            file.to_str().unwrap(),
        ]);
        let (bf, ba) = last_query(&stdout(&batch));
        let (sf, sa) = last_query(&stdout(&stepped));
        assert_eq!(bf.to_bits(), sf.to_bits(), "{name} for");
        assert_eq!(ba.to_bits(), sa.to_bits(), "{name} against");
    }
}

#[test]
fn trace_logs_one_fired_line_per_consequent() {
    for (args, expected_fired) in [
        (vec!["run", "--trace"], 2usize),
        (vec!["run", "--trace", "--stepped"], 2usize),
    ] {
        let mut full = args.clone();
        let file = scenario("variant2-then-load.tbm");
        full.push(file.to_str().unwrap());
        let out = tbm(&full);
        let text = stdout(&out);
        let fired: Vec<&str> = text
            .lines()
            .filter(|l| l.starts_with("trace: FIRED"))
            .collect();
        assert_eq!(fired.len(), expected_fired, "{args:?}:\n{text}");
        // Each fired line names a distinct consequent instance.
        let mut consequents: Vec<&str> = fired
            .iter()
            .map(|l| l.rsplit("consequent").next().unwrap())
            .collect();
        consequents.sort_unstable();
        consequents.dedup();
        assert_eq!(consequents.len(), expected_fired);
    }
}

#[test]
fn config_overrides_change_the_answer() {
    let dir = std::env::temp_dir();
    let path = dir.join("tbm_cli_test_override.sx");
    std::fs::write(&path, "(config :born-evidence (0.5 0))\n").unwrap();
    let out = tbm(&[
        "run",
        "--format",
        "json",
        "--config",
        path.to_str().unwrap(),
        scenario("variant2.tbm").to_str().unwrap(),
    ]);
    // The stock expectation no longer holds under the override.
    assert_eq!(code(&out), 1);
    let (f, a) = last_query(&stdout(&out));
    assert_eq!(f, 0.5);
    assert_eq!(a, 0.0);
}
