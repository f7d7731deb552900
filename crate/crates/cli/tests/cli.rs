use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn write_config(dir: &Path, doc: &Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(doc).unwrap()).unwrap();
    path
}

fn decaylab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decaylab")).args(args).output().unwrap()
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    decaylab(&args)
}

fn slow_doc(expect: &str) -> Value {
    json!({
        "model": {"name": "ode2_slow"},
        "initial": {"preset": "kernel_constant(1)"},
        "integrator": {"dt": 1e-3, "t_end": 1e8, "step_growth": 1e-3, "store_states": false},
        "analyses": {"classify": {"expect": expect}}
    })
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn passing_run_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &slow_doc("slow"));
    let out = dir.path().join("out");
    let o = run("run", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("classify: pass"));
    for name in ["trajectory.csv", "classification.json", "summary.json", "config.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn failed_assertion_exits_one_with_a_report_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &slow_doc("fast"));
    let out = dir.path().join("out");
    let o = run("classify", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("FAIL"), "{text}");
    assert!(text.contains("summary.json"), "{text}");
}

#[test]
fn configuration_errors_exit_two_with_the_key_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = slow_doc("slow");
    doc["integrator"]["dtt"] = json!(0.1);
    let cfg = write_config(dir.path(), &doc);
    let o = run("run", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("integrator.dtt"), "{}", stderr(&o));

    let o = run("run", &dir.path().join("missing.json"), &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));

    let no_initial = json!({"model": {"name": "ode2_slow"}, "analyses": {"classify": {}}});
    let cfg = write_config(dir.path(), &no_initial);
    let o = run("classify", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn simulate_writes_states_and_records_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let doc = json!({
        "model": {"name": "ode2_slow"},
        "initial": {"coefficients": [1.0, 0.1]},
        "integrator": {"t_end": 1.0, "store_states": false},
        "analyses": {"classify": {}}
    });
    let cfg = write_config(dir.path(), &doc);
    let out = dir.path().join("out");
    let o = run("simulate", &cfg, &out, &["--store-states", "--seed", "42"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,norm_H,norm_Ahalf,Q,Q_2p,c0,c1");
    assert!(!out.join("classification.json").exists());
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["meta"]["seed"], json!(42));
}

#[test]
fn construct_fast_flags_override_the_document() {
    let dir = tempfile::tempdir().unwrap();
    let doc = json!({"model": {"name": "ode2_fast", "lambda": 1.0, "beta": 10.0}});
    let cfg = write_config(dir.path(), &doc);
    let out = dir.path().join("out");
    let o = run("construct-fast", &cfg, &out, &["--eigen-index", "0", "--v0", "0.05,0", "--r0", "0.1"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let sol: Value = serde_json::from_str(&fs::read_to_string(out.join("fast_solution.json")).unwrap()).unwrap();
    assert_eq!(sol["result"]["lambda"], json!(1.0));
    // v0 keeps the requested direction; its size is fitted to the admissible ball
    assert!(sol["result"]["v0"][0].as_f64().unwrap() > 0.0);
    assert_eq!(sol["result"]["v0"][1], json!(0.0));

    let o = run("construct-fast", &cfg, &dir.path().join("bad"), &["--v0", "0.05"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("analyses.construct_fast.v0"), "{}", stderr(&o));
}

#[test]
fn sweep_writes_an_index() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = slow_doc("slow");
    doc["sweep"] = json!({"axes": [{"path": "initial.preset", "values": ["kernel_constant(0.5)", "kernel_constant(2)"]}]});
    let cfg = write_config(dir.path(), &doc);
    let out = dir.path().join("out");
    let o = run("sweep", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("2 points, 0 failed"));
    assert!(out.join("index.json").exists());
    assert!(out.join("point_0001").join("classification.json").exists());

    doc["sweep"]["budget"] = json!(1);
    let cfg = write_config(dir.path(), &doc);
    let o = run("sweep", &cfg, &dir.path().join("refused"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("2 points"), "{}", stderr(&o));
}
