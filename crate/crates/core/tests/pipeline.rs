mod common;

use common::*;

use evosched::evolution::{Algorithm, EvolutionConfig};
use evosched::feasibility::check_schedule;
use evosched::instance::SizeClass;
use evosched::local_search::Variant;
use evosched::pipeline::{run_pipeline, PipelineConfig};
use evosched::synth::generate_synthetic_instance;
use evosched::Error;

fn quick_config(algorithms: Vec<Algorithm>, seed: u64) -> PipelineConfig {
    PipelineConfig {
        algorithms,
        evolution: EvolutionConfig {
            population_size: 12,
            seed,
            time_budget_s: None,
            max_runs: Some(1),
            max_generations: Some(4),
            ..EvolutionConfig::default()
        },
        top_k: 2,
        variants: vec![Variant::Keep, Variant::Drop],
        battery_candidates: 2,
    }
}

#[test]
fn zero_activity_instance_runs_through() {
    let battery = evosched::instance::Battery { id: 0, capacity_kwh: 20.0, max_power_kw: 20.0, efficiency: 0.9 };
    let inst = flat_instance(30, false, 2, vec![battery], vec![], 40.0, 100.0);
    let out = run_pipeline(&inst, None, None, &quick_config(vec![Algorithm::Cmaes], 0)).unwrap();
    let base = naive_cost(&inst, &inst.base_load.values, &out.base);
    assert!(close(out.report.base_cost, base, 1e-12));
    // Flat price and load: the batteries stay idle.
    assert_eq!(out.report.final_cost, out.report.base_cost);
    assert!(out.report.actual.is_none());
}

#[test]
fn stage_costs_are_non_increasing_and_outputs_feasible() {
    let inst = generate_synthetic_instance(SizeClass::Small, 8);
    let out = run_pipeline(&inst, None, None, &quick_config(vec![Algorithm::Cmaes, Algorithm::Ga], 4)).unwrap();
    let r = &out.report;
    assert!(r.base_cost >= r.improved_cost && r.improved_cost >= r.final_cost, "{r:?}");
    assert_eq!(r.evolution.len(), 2);
    assert_eq!(r.candidates.len(), 4);
    for s in [&out.base, &out.improved, &out.final_schedule] {
        check_schedule(&inst, s).unwrap();
    }
    let load = naive_load(&inst, &inst.base_load.values, &out.final_schedule);
    assert!(close(r.final_cost, naive_cost(&inst, &load, &out.final_schedule), 1e-9));
    assert_eq!(out.traces.len(), 2);
}

#[test]
fn actual_load_is_evaluated_separately() {
    let inst = generate_synthetic_instance(SizeClass::Small, 9);
    let forecast = inst.base_load.with_values(inst.base_load.values.iter().map(|v| v * 0.9).collect());
    let out = run_pipeline(&inst, Some(&forecast), Some(&inst.base_load), &quick_config(vec![Algorithm::Ga], 1)).unwrap();
    let actual = out.report.actual.as_ref().unwrap();
    let on_actual = naive_cost(&inst, &naive_load(&inst, &inst.base_load.values, &out.final_schedule), &out.final_schedule);
    assert!(close(actual.final_.total, on_actual, 1e-9));
    let on_forecast = naive_cost(&inst, &naive_load(&inst, &forecast.values, &out.final_schedule), &out.final_schedule);
    assert!(close(out.report.final_cost, on_forecast, 1e-9));
}

#[test]
fn reports_are_deterministic_and_written() {
    let inst = generate_synthetic_instance(SizeClass::Small, 10);
    let config = quick_config(vec![Algorithm::Cmaes], 2);
    let a = run_pipeline(&inst, None, None, &config).unwrap();
    let b = run_pipeline(&inst, None, None, &config).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.final_schedule, b.final_schedule);

    let dir = tempfile::tempdir().unwrap();
    a.write(dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let parsed: evosched::pipeline::PipelineReport = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, a.report);
    for name in ["base_schedule.json", "improved_schedule.json", "final_schedule.json", "trace_cmaes.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let final_schedule = evosched::Schedule::read_json(&dir.path().join("final_schedule.json"), &inst).unwrap();
    assert_eq!(final_schedule, a.final_schedule);
}

#[test]
fn bad_configuration_is_rejected() {
    let inst = generate_synthetic_instance(SizeClass::Small, 1);
    let mut config = quick_config(vec![], 0);
    assert!(matches!(run_pipeline(&inst, None, None, &config), Err(Error::Config(_))));
    config.algorithms = vec![Algorithm::Ga];
    config.top_k = 0;
    assert!(matches!(run_pipeline(&inst, None, None, &config), Err(Error::Config(_))));
    config.top_k = 1;
    let short = inst.base_load.with_values(vec![1.0; 5]);
    assert!(matches!(run_pipeline(&inst, Some(&short), None, &config), Err(Error::Validation(_))));
}
