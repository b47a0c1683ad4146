use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn evosched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evosched")).args(args).output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn gen_instance(dir: &Path, seed: &str) -> PathBuf {
    let path = dir.join("inst.json");
    let out = evosched(&["gen-instance", "--size", "small", "--seed", seed, "--out", arg(&path)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

const QUICK: [&str; 6] = ["--pop", "8", "--runs", "1", "--generations", "3"];

#[test]
fn gen_instance_writes_json_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen_instance(dir.path(), "4");
    for name in ["inst.json", "inst_price.csv", "inst_base_load.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let again = dir.path().join("again.json");
    evosched(&["gen-instance", "--size", "small", "--seed", "4", "--out", arg(&again)]);
    let a: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let b: Value = serde_json::from_str(&std::fs::read_to_string(&again).unwrap()).unwrap();
    assert_eq!(a["activities"], b["activities"]);
}

#[test]
fn stages_chain_and_costs_do_not_increase() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_instance(dir.path(), "1");
    let evolve_dir = dir.path().join("evolve");
    let mut args = vec!["evolve", "--instance", arg(&inst), "--algo", "both", "--out", arg(&evolve_dir)];
    args.extend(QUICK);
    let evolved = stdout_json(&evosched(&args));
    let base_cost = evolved["cost"]["total"].as_f64().unwrap();
    assert_eq!(evolved["runs"].as_array().unwrap().len(), 2);
    for name in ["base_schedule.json", "evolve.json", "trace_cmaes.csv", "trace_ga.csv"] {
        assert!(evolve_dir.join(name).exists(), "{name}");
    }

    let base = evolve_dir.join("base_schedule.json");
    let improved = dir.path().join("improved.json");
    let out = stdout_json(&evosched(&[
        "improve", "--instance", arg(&inst), "--schedule", arg(&base), "--variant", "keep", "--out", arg(&improved),
    ]));
    let improved_cost = out["improved_cost"]["total"].as_f64().unwrap();
    assert_eq!(out["input_cost"]["total"].as_f64().unwrap(), base_cost);
    assert!(improved_cost <= base_cost);

    let final_path = dir.path().join("final.json");
    let out = stdout_json(&evosched(&[
        "battery", "--instance", arg(&inst), "--schedule", arg(&improved), "--out", arg(&final_path),
    ]));
    let final_cost = out["final_cost"]["total"].as_f64().unwrap();
    assert!(final_cost <= improved_cost);

    let report = dir.path().join("eval.json");
    let out = stdout_json(&evosched(&[
        "evaluate",
        "--instance",
        arg(&inst),
        "--schedule",
        arg(&final_path),
        "--actual",
        arg(&dir.path().join("inst_base_load.csv")),
        "--out",
        arg(&report),
    ]));
    assert_eq!(out["forecast"]["total"].as_f64().unwrap(), final_cost);
    assert_eq!(out["actual"], out["forecast"]);
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(written, out);
}

#[test]
fn pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_instance(dir.path(), "2");
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let mut args = vec!["pipeline", "--instance", arg(&inst), "--top-k", "1", "--battery-candidates", "1"];
        args.extend(QUICK);
        args.extend(["--seed", "5", "--out", arg(&out_dir)]);
        let summary = stdout_json(&evosched(&args));
        (summary, std::fs::read_to_string(out_dir.join("report.json")).unwrap())
    };
    let (a, report_a) = run("a");
    let (b, report_b) = run("b");
    assert_eq!(a, b);
    assert_eq!(report_a, report_b);
    let base = a["base_cost"].as_f64().unwrap();
    let improved = a["improved_cost"].as_f64().unwrap();
    let final_ = a["final_cost"].as_f64().unwrap();
    assert!(base >= improved && improved >= final_);
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = evosched(&["evaluate", "--instance", arg(&bad), "--schedule", arg(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let inst = gen_instance(dir.path(), "3");
    let short = dir.path().join("short.csv");
    std::fs::write(&short, "timestamp,value\n2020-11-01T00:00:00,1.0\n").unwrap();
    let mut args = vec!["evolve", "--instance", arg(&inst), "--forecast", arg(&short), "--out", arg(dir.path())];
    args.extend(QUICK);
    assert_eq!(evosched(&args).status.code(), Some(2));

    let mut args = vec!["pipeline", "--instance", arg(&inst), "--top-k", "0", "--out", arg(dir.path())];
    args.extend(QUICK);
    assert_eq!(evosched(&args).status.code(), Some(2));
}

#[test]
fn missing_file_exits_with_three() {
    let out = evosched(&["evaluate", "--instance", "/nonexistent/inst.json", "--schedule", "/nonexistent/s.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn infeasible_schedule_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_instance(dir.path(), "6");
    let mut args = vec!["evolve", "--instance", arg(&inst), "--out", arg(dir.path())];
    args.extend(QUICK);
    stdout_json(&evosched(&args));
    let path = dir.path().join("base_schedule.json");
    let mut schedule: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let rec = schedule["recurring"].as_array_mut().unwrap();
    let (a, b) = (rec[0].clone(), rec[1].clone());
    // Put two activities in the same room at the same time.
    rec[1] = Value::Object(
        b.as_object()
            .unwrap()
            .iter()
            .map(|(k, v)| (k.clone(), if k == "id" { v.clone() } else { a[k].clone() }))
            .collect(),
    );
    std::fs::write(&path, serde_json::to_string(&schedule).unwrap()).unwrap();
    let out = evosched(&["evaluate", "--instance", arg(&inst), "--schedule", arg(&path)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stdout));
}
