use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_rapu-sim");

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/data")
        .join(name)
}

fn sim(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn summary(report: &str) -> Value {
    let last = report.lines().last().unwrap();
    serde_json::from_str::<Value>(last).unwrap()["summary"].clone()
}

#[test]
fn run_writes_the_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "config.json", "{}");
    let out = dir.path().join("report.jsonl");
    for name in ["nominal", "fatigue", "alcohol"] {
        let scenario = data(&format!("{name}.jsonl"));
        let o = sim(&[
            "run",
            "--scenario",
            scenario.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let golden = fs::read_to_string(data(&format!("{name}.report.jsonl"))).unwrap();
        assert_eq!(fs::read_to_string(&out).unwrap(), golden, "{name}");
    }
}

#[test]
fn run_without_out_prints_to_stdout_and_echoes_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "config.json", "{}");
    let scenario = data("alcohol.jsonl");
    let o = sim(&[
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "42",
    ]);
    assert!(o.status.success());
    let s = summary(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(s["seed"], 42);
    assert_eq!(s["final_state"]["phase"], "DISTRESS");
}

#[test]
fn set_overrides_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "config.json", r#"{"alcohol_threshold": 0.6}"#);
    let scenario = data("alcohol.jsonl");
    let o = sim(&[
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--set",
        "alcohol_threshold=0.8",
        "--set",
        "recipient=+4400000000",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(s["config"]["alcohol_threshold"], 0.8);
    assert_eq!(s["config"]["recipient"], "+4400000000");
    // 0.75 ppm stays under the raised threshold.
    assert_eq!(s["final_state"]["phase"], "MONITORING");
}

#[test]
fn realtime_replay_matches_batch() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "config.json", r#"{"sample_period_ms": 10}"#);
    let scenario = write(
        dir.path(),
        "s.jsonl",
        concat!(
            "{\"meta\":{\"name\":\"short\",\"duration_ms\":600}}\n",
            "{\"t_ms\":400,\"ch\":\"gas\",\"v\":0.9}\n",
        ),
    );
    let run = |extra: &[&str]| {
        let mut args = vec![
            "run",
            "--scenario",
            scenario.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        let o = sim(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    let batch = run(&[]);
    let paced = run(&["--set", "realtime=true"]);
    let strip = |r: &str| r.lines().rev().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&batch), strip(&paced));
    assert_eq!(summary(&paced)["config"]["realtime"], true);
}

#[test]
fn bad_inputs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let good_config = write(dir.path(), "good.json", "{}");
    let bad_config = write(dir.path(), "bad.json", r#"{"sample_period_ms": 0}"#);
    let unknown_key = write(dir.path(), "unknown.json", r#"{"warp": 9}"#);
    let bad_scenario = write(
        dir.path(),
        "bad.jsonl",
        "{\"t_ms\":0,\"ch\":\"gas\",\"v\":0.2}\n{\"t_ms\":10,\"ch\":\"gas\",\"v\":7}\n",
    );
    let good_scenario = data("nominal.jsonl");
    let missing = dir.path().join("missing.jsonl");
    let cases: Vec<Vec<&str>> = vec![
        vec![
            "run",
            "--scenario",
            bad_scenario.to_str().unwrap(),
            "--config",
            good_config.to_str().unwrap(),
        ],
        vec![
            "run",
            "--scenario",
            good_scenario.to_str().unwrap(),
            "--config",
            bad_config.to_str().unwrap(),
        ],
        vec![
            "run",
            "--scenario",
            good_scenario.to_str().unwrap(),
            "--config",
            unknown_key.to_str().unwrap(),
        ],
        vec![
            "run",
            "--scenario",
            missing.to_str().unwrap(),
            "--config",
            good_config.to_str().unwrap(),
        ],
        vec![
            "run",
            "--scenario",
            good_scenario.to_str().unwrap(),
            "--config",
            good_config.to_str().unwrap(),
            "--set",
            "novalue",
        ],
        vec!["validate", "--scenario", bad_scenario.to_str().unwrap()],
        vec!["launch"],
        vec!["run"],
    ];
    for args in cases {
        let o = sim(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!o.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn scenario_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.jsonl",
        "{\"t_ms\":0,\"ch\":\"ir\",\"v\":0}\n{\"t_ms\":5,\"ch\":\"ir\",\"v\":4}\n",
    );
    let o = sim(&["validate", "--scenario", bad.to_str().unwrap()]);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn validate_summarises_a_scenario() {
    let o = sim(&[
        "validate",
        "--scenario",
        data("fatigue.jsonl").to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.starts_with("ok: "), "{out}");
    assert!(out.contains("duration=30000ms"), "{out}");
}

#[test]
fn help_and_version_exit_zero() {
    assert!(sim(&["--help"]).status.success());
    assert!(sim(&["--version"]).status.success());
}

#[test]
fn serve_reports_bind_failure() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "config.json", "{}");
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let o = sim(&[
        "serve",
        "--config",
        config.to_str().unwrap(),
        "--listen",
        &addr,
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot bind"));
}
