use std::fs;
use std::path::Path;

use decaylab::experiment::{
    run_experiment, run_sweep, ExperimentConfig, Mode, RunOptions, CONFIG_FILE, INDEX_FILE, SUMMARY_FILE,
    TRAJECTORY_FILE,
};
use decaylab::Error;
use serde_json::{json, Value};

fn opts(dir: &Path) -> RunOptions {
    RunOptions {
        out_dir: Some(dir.to_path_buf()),
        seed: None,
        store_states: false,
        mode: Mode::Full,
    }
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn slow_doc() -> Value {
    json!({
        "model": {"name": "ode2_slow"},
        "initial": {"preset": "kernel_constant(1)"},
        "integrator": {"dt": 1e-3, "t_end": 1e8, "step_growth": 1e-3, "store_states": false},
        "analyses": {"classify": {"expect": "slow"}}
    })
}

#[test]
fn ode2_slow_classifies_slow() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_value(slow_doc()).unwrap();
    let out = run_experiment(&cfg, &opts(dir.path())).unwrap();
    assert!(out.pass);
    assert!(dir.path().join(TRAJECTORY_FILE).exists());
    assert!(dir.path().join(CONFIG_FILE).exists());
    let report = read_json(&dir.path().join("classification.json"));
    assert_eq!(report["result"]["report"]["verdict"], json!("slow"), "{report:#}");
    assert_eq!(report["meta"]["seed"], json!(cfg.seed));
    assert_eq!(report["meta"]["config_hash"], json!(cfg.hash()));
}

#[test]
fn wrong_expectation_fails_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = slow_doc();
    doc["analyses"]["classify"]["expect"] = json!("fast");
    let cfg = ExperimentConfig::from_value(doc).unwrap();
    let out = run_experiment(&cfg, &opts(dir.path())).unwrap();
    assert!(!out.pass);
    let summary = read_json(&dir.path().join(SUMMARY_FILE));
    assert_eq!(summary["result"]["pass"], json!(false));
}

#[test]
fn neumann_fast_construction_validates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_value(json!({
        "model": {"name": "neumann_interval", "modes": 16, "p": 2},
        "analyses": {"construct_fast": {"eigen_index": 1}}
    }))
    .unwrap();
    let out = run_experiment(&cfg, &opts(dir.path())).unwrap();
    assert!(out.pass);
    let sol = read_json(&dir.path().join("fast_solution.json"));
    assert_eq!(sol["result"]["lambda"], json!(1.0));
    assert_eq!(sol["result"]["pass"], json!(true));
    assert_eq!(sol["result"]["validation"]["pass"], json!(true), "{:#}", sol["result"]["validation"]);
}

#[test]
fn empty_analyses_write_the_trajectory_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_value(json!({
        "model": {"name": "ode2_slow"},
        "initial": {"coefficients": [1.0, 0.0]},
        "integrator": {"t_end": 1.0}
    }))
    .unwrap();
    let out = run_experiment(&cfg, &opts(dir.path())).unwrap();
    assert!(out.pass);
    assert!(out.summary.analyses.is_empty());
    let csv = fs::read_to_string(dir.path().join(TRAJECTORY_FILE)).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("t,norm_H,norm_Ahalf,Q,Q_2p"), "{header}");
    for name in ["classification.json", "certificate.json", "fast_solution.json", "quotients.json"] {
        assert!(!dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn identical_config_and_seed_give_identical_reports() {
    let doc = json!({
        "model": {"name": "neumann_interval", "modes": 8, "p": 2, "samples": 200},
        "initial": {"certified": {}},
        "integrator": {"dt": 1e-3, "t_end": 100.0, "step_growth": 1e-3},
        "analyses": {"certify_slow": {"openness_samples": 5}, "check_quotients": {}}
    });
    let cfg = ExperimentConfig::from_value(doc).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&cfg, &opts(a.path())).unwrap();
    run_experiment(&cfg, &opts(b.path())).unwrap();
    for name in [TRAJECTORY_FILE, CONFIG_FILE, SUMMARY_FILE, "certificate.json", "quotients.json"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
    // a different seed changes the sampled data and the hash
    let c = tempfile::tempdir().unwrap();
    run_experiment(&cfg, &RunOptions { seed: Some(cfg.seed + 1), ..opts(c.path()) }).unwrap();
    let h1 = read_json(&a.path().join("certificate.json"))["meta"]["config_hash"].clone();
    let h2 = read_json(&c.path().join("certificate.json"))["meta"]["config_hash"].clone();
    assert_ne!(h1, h2);
}

#[test]
fn kernel_amplitude_sweep_is_all_slow() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = slow_doc();
    let values: Vec<Value> = [0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0]
        .iter()
        .map(|a| json!(format!("kernel_constant({a})")))
        .collect();
    doc["sweep"] = json!({"axes": [{"path": "initial.preset", "values": values}]});
    let out = run_sweep(&doc, &opts(dir.path())).unwrap();
    assert!(out.pass);
    assert_eq!(out.index.points.len(), 8);
    for (i, p) in out.index.points.iter().enumerate() {
        assert_eq!(p.index, i);
        assert_eq!(p.dir, format!("point_{i:04}"));
        let r = read_json(&dir.path().join(&p.dir).join("classification.json"));
        assert_eq!(r["result"]["report"]["verdict"], json!("slow"));
    }
    let index = read_json(&dir.path().join(INDEX_FILE));
    assert_eq!(index["points"].as_array().unwrap().len(), 8);
}

#[test]
fn eigenvalue_sweep_constructs_each_fast_solution() {
    let dir = tempfile::tempdir().unwrap();
    let doc = json!({
        "model": {"name": "neumann_interval", "modes": 16, "p": 2},
        "analyses": {"construct_fast": {"validation": {"window": [3.0, 8.0]}}},
        "sweep": {"axes": [{"path": "analyses.construct_fast.eigen_index", "values": [1, 2, 3, 4, 5]}]}
    });
    let out = run_sweep(&doc, &opts(dir.path())).unwrap();
    assert!(out.pass, "{:?}", out.index.points);
    for (k, p) in out.index.points.iter().enumerate() {
        let sol = read_json(&dir.path().join(&p.dir).join("fast_solution.json"));
        let lambda = ((k + 1) * (k + 1)) as f64;
        assert_eq!(sol["result"]["lambda"], json!(lambda));
    }
}

#[test]
fn single_point_sweep_matches_a_plain_run() {
    let sweep_dir = tempfile::tempdir().unwrap();
    let run_dir = tempfile::tempdir().unwrap();
    let mut doc = slow_doc();
    doc["sweep"] = json!({"axes": [{"path": "initial.preset", "values": ["kernel_constant(1)"]}]});
    let out = run_sweep(&doc, &opts(sweep_dir.path())).unwrap();
    assert_eq!(out.index.points.len(), 1);
    let cfg = ExperimentConfig::from_value(slow_doc()).unwrap();
    run_experiment(&cfg, &opts(run_dir.path())).unwrap();
    let point = sweep_dir.path().join(&out.index.points[0].dir);
    for name in [TRAJECTORY_FILE, SUMMARY_FILE, "classification.json"] {
        assert!(fs::read(point.join(name)).unwrap() == fs::read(run_dir.path().join(name)).unwrap(), "{name}");
    }
    assert_eq!(out.index.points[0].config_hash.as_deref(), Some(cfg.hash().as_str()));
}

#[test]
fn oversized_sweep_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = slow_doc();
    doc["sweep"] = json!({
        "axes": [
            {"path": "integrator.dt", "values": [1e-3, 2e-3, 3e-3]},
            {"path": "integrator.t_end", "values": [1.0, 2.0, 3.0]}
        ],
        "budget": 8
    });
    let e = run_sweep(&doc, &opts(dir.path())).unwrap_err();
    let Error::Config { path, message } = e else { panic!("{e:?}") };
    assert_eq!(path, "sweep.budget");
    assert!(message.contains("9 points"), "{message}");
    assert!(!dir.path().join(INDEX_FILE).exists());
}
