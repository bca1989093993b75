use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpadapt"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn gen_data_then_estimate_and_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("gen.json"), r#"{"n": 3000, "d": 4, "tau": 0.01}"#).unwrap();
    let out = cli(&["gen-data", "--config", "gen.json", "--out", "data", "--seed", "5"], d);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(d.join("data/data.csv")).unwrap();
    assert!(csv.starts_with("f0,f1,f2,f3,y\n"));
    assert_eq!(csv.lines().count(), 3001);
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("data/data.json")).unwrap()).unwrap();
    assert_eq!(side["x_star"].as_array().unwrap().len(), 4);
    assert_eq!(side["seed"], 5);

    let est = json(&cli(&["estimate", "--data", "data/data.csv", "--epsilon", "50", "--out", "est"], d));
    assert_eq!(est["sigma_hat"].as_array().unwrap().len(), 4);
    assert_eq!(est["c_hat"].as_array().unwrap().len(), 4);
    assert!(d.join("est/estimate.json").exists());

    std::fs::write(
        d.join("run.json"),
        r#"{"problem": {"data": {"type": "csv", "path": "data/data.csv"}},
            "method": {"algorithm": "pagan"}, "epsilon": 4.0, "stepsize": 0.2,
            "clip_bound": 2.0, "batch": 30, "steps": 50}"#,
    )
    .unwrap();
    let out = cli(&["run", "--config", "run.json", "--out", "run"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(d.join("run/trace.csv")).unwrap();
    assert!(trace.starts_with("k,loss,grad_norm,clip_fraction,step_size"));
    assert_eq!(trace.lines().count(), 51);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("run/summary.json")).unwrap()).unwrap();
    assert!(summary["accountant_epsilon"].as_f64().unwrap() > 0.0);
}

#[test]
fn sweep_report_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("sweep.json"),
        r#"{"problem": {"data": {"type": "synthetic", "n": 200, "d": 5}},
            "methods": [{"algorithm": "pasan"}, {"algorithm": "sgd"}],
            "epsilons": [2.0], "stepsizes": [0.1, 0.4], "clip_bounds": [1.0],
            "batch": 10, "steps": 30, "repetitions": 2, "bootstrap_resamples": 20}"#,
    )
    .unwrap();
    let out = cli(&["sweep", "--config", "sweep.json", "--out", "s", "--jobs", "2"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["results.csv", "final.csv", "config.json", "curves/pasan.csv", "curves/sgd.csv"] {
        assert!(d.join("s").join(f).exists(), "{f}");
    }
    let out = cli(&["report", "--input", "s/results.csv", "--out", "r"], d);
    assert!(out.status.success());
    assert!(d.join("r/final.csv").exists());

    let reports = json(&cli(&["verify", "--trials", "2000"], d));
    let list = reports.as_array().unwrap();
    assert!(list.len() >= 8);
    for r in list {
        assert!(r["violations"].as_u64().unwrap() <= r["trials"].as_u64().unwrap());
        assert!(r["passed"].as_bool().unwrap(), "{r}");
    }
}

#[test]
fn accountant_flags() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&cli(&["accountant", "--n", "2000", "--batch", "50", "--steps", "1600", "--epsilon", "4"], dir.path()));
    assert_eq!(v["q"], 0.025);
    assert_eq!(v["max_steps"], 1600);
    assert!(v["epsilon"].as_f64().unwrap() > 4.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(cli(&["sweep"], d).status.code(), Some(2));
    assert_eq!(cli(&["sweep", "--config", "missing.json"], d).status.code(), Some(3));
    std::fs::write(d.join("bad.json"), r#"{"n": 0, "d": 3}"#).unwrap();
    assert_eq!(cli(&["gen-data", "--config", "bad.json"], d).status.code(), Some(2));
    std::fs::write(d.join("garbled.json"), "{ not json").unwrap();
    assert_eq!(cli(&["run", "--config", "garbled.json"], d).status.code(), Some(2));
    std::fs::write(d.join("ok.json"), r#"{"n": 10, "d": 2}"#).unwrap();
    std::fs::write(d.join("blocker"), "a file, not a directory").unwrap();
    assert_eq!(cli(&["gen-data", "--config", "ok.json", "--out", "blocker/sub"], d).status.code(), Some(3));
    assert_eq!(cli(&["report", "--input", "nope.csv"], d).status.code(), Some(3));
    assert_eq!(cli(&["accountant", "--n", "10", "--batch", "20", "--steps", "1", "--scale", "1"], d).status.code(), Some(2));
}
