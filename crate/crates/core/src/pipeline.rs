//! End-to-end run: evolve base schedules, improve the best of them, add
//! battery dispatch, and report costs per stage.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::battery::dispatch_batteries;
use crate::decode::Evaluator;
use crate::error::{Error, Result};
use crate::evolution::{evolve, Algorithm, EvolutionConfig, RunTrace};
use crate::instance::Instance;
use crate::local_search::{improve_schedule, Variant};
use crate::objective::{self, CostBreakdown};
use crate::schedule::Schedule;
use crate::series::SeriesFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub algorithms: Vec<Algorithm>,
    /// Shared by every algorithm; `algorithm` is overridden per run.
    pub evolution: EvolutionConfig,
    /// Number of distinct base schedules carried into improvement.
    pub top_k: usize,
    pub variants: Vec<Variant>,
    /// Number of improved schedules that get a battery dispatch.
    pub battery_candidates: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            algorithms: vec![Algorithm::Cmaes],
            evolution: EvolutionConfig::default(),
            top_k: 10,
            variants: vec![Variant::Keep, Variant::Drop],
            battery_candidates: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCosts {
    pub base: CostBreakdown,
    pub improved: CostBreakdown,
    #[serde(rename = "final")]
    pub final_: CostBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub best_cost: f64,
    pub evaluations: usize,
    pub restarts: usize,
    pub generations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub base_cost: f64,
    pub variant: Variant,
    pub improved_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub base_cost: f64,
    pub improved_cost: f64,
    pub final_cost: f64,
    /// Costs evaluated against the forecast load used for optimisation.
    pub forecast: StageCosts,
    /// The same schedules evaluated against the realised load, if given.
    pub actual: Option<StageCosts>,
    pub evolution: Vec<AlgorithmSummary>,
    pub candidates: Vec<CandidateSummary>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: PipelineReport,
    pub base: Schedule,
    pub improved: Schedule,
    pub final_schedule: Schedule,
    pub traces: Vec<(Algorithm, RunTrace)>,
}

/// Runs every stage. `forecast` replaces the instance's base load for
/// optimisation; `actual` is only used for the extra evaluation.
pub fn run_pipeline(
    instance: &Instance,
    forecast: Option<&SeriesFrame>,
    actual: Option<&SeriesFrame>,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    if config.algorithms.is_empty() || config.variants.is_empty() {
        return Err(Error::Config("at least one algorithm and one variant required".into()));
    }
    config.evolution.validate()?;
    if config.top_k == 0 || config.battery_candidates == 0 {
        return Err(Error::Config("top_k and battery_candidates must be at least 1".into()));
    }
    let load = forecast.unwrap_or(&instance.base_load);
    for (name, s) in [("forecast", Some(load)), ("actual", actual)] {
        if let Some(s) = s {
            if s.len() != instance.horizon.n_slots {
                return Err(Error::Validation(format!(
                    "{name} series has {} values, horizon has {} slots",
                    s.len(),
                    instance.horizon.n_slots
                )));
            }
        }
    }
    let ev = Evaluator::new(instance, load)?;

    let mut elite: Vec<(f64, Schedule)> = Vec::new();
    let mut traces = Vec::new();
    let mut summaries = Vec::new();
    for &algorithm in &config.algorithms {
        let cfg = EvolutionConfig {
            algorithm,
            ..config.evolution.clone()
        };
        let result = evolve(&ev, &cfg, config.top_k).map_err(|e| Error::stage("evolve", e))?;
        summaries.push(AlgorithmSummary {
            algorithm,
            best_cost: result.best.cost,
            evaluations: result.trace.evaluations,
            restarts: result.trace.restarts,
            generations: result.trace.best_cost_per_generation.len(),
        });
        for ind in result.elite {
            let schedule = ind.schedule.expect("elite members are feasible");
            if !elite.iter().any(|(_, s)| *s == schedule) {
                elite.push((ind.cost, schedule));
            }
        }
        traces.push((algorithm, result.trace));
    }
    elite.sort_by(|a, b| a.0.total_cmp(&b.0));
    elite.truncate(config.top_k);
    if elite.is_empty() {
        return Err(Error::stage(
            "evolve",
            Error::Config("no feasible base schedule found within the budget".into()),
        ));
    }
    let base = elite[0].1.clone();

    let jobs: Vec<(usize, Variant)> = (0..elite.len())
        .flat_map(|i| config.variants.iter().map(move |&v| (i, v)))
        .collect();
    let improved: Vec<(usize, Variant, Schedule, f64)> = jobs
        .par_iter()
        .map(|&(i, v)| {
            let s = improve_schedule(&ev, &elite[i].1, v);
            let c = ev.cost(&s).total;
            (i, v, s, c)
        })
        .collect();
    let candidates = improved
        .iter()
        .map(|(i, v, _, c)| CandidateSummary {
            base_cost: elite[*i].0,
            variant: *v,
            improved_cost: *c,
        })
        .collect();

    let mut ranked: Vec<&(usize, Variant, Schedule, f64)> = improved.iter().collect();
    ranked.sort_by(|a, b| a.3.total_cmp(&b.3));
    let mut distinct: Vec<&Schedule> = Vec::new();
    for r in &ranked {
        if !distinct.contains(&&r.2) {
            distinct.push(&r.2);
        }
    }
    let improved_best = distinct[0].clone();
    let improved_cost = ev.cost(&improved_best);

    let mut final_schedule = improved_best.clone();
    let mut final_cost = improved_cost;
    for s in distinct.iter().take(config.battery_candidates) {
        let activity_load = load.with_values(objective::total_load(instance, &load.values, s));
        let plan = dispatch_batteries(&instance.batteries, &activity_load, &instance.price.values);
        let mut with_batteries = (*s).clone();
        with_batteries.battery_actions = plan.actions;
        let cost = ev.cost(&with_batteries);
        if cost.total < final_cost.total {
            final_cost = cost;
            final_schedule = with_batteries;
        }
    }

    let forecast_costs = StageCosts {
        base: ev.cost(&base),
        improved: improved_cost,
        final_: final_cost,
    };
    let actual_costs = actual.map(|a| StageCosts {
        base: objective::evaluate(instance, &a.values, &base),
        improved: objective::evaluate(instance, &a.values, &improved_best),
        final_: objective::evaluate(instance, &a.values, &final_schedule),
    });
    Ok(PipelineOutput {
        report: PipelineReport {
            base_cost: forecast_costs.base.total,
            improved_cost: forecast_costs.improved.total,
            final_cost: forecast_costs.final_.total,
            forecast: forecast_costs,
            actual: actual_costs,
            evolution: summaries,
            candidates,
        },
        base,
        improved: improved_best,
        final_schedule,
        traces,
    })
}

impl PipelineOutput {
    /// Writes `report.json`, the three stage schedules and one trace CSV per
    /// algorithm into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let report_path = dir.join("report.json");
        let text = serde_json::to_string_pretty(&self.report).map_err(|e| Error::Json {
            path: report_path.clone(),
            source: e,
        })?;
        std::fs::write(&report_path, text + "\n").map_err(|e| Error::io(&report_path, e))?;
        self.base.write_json(&dir.join("base_schedule.json"))?;
        self.improved.write_json(&dir.join("improved_schedule.json"))?;
        self.final_schedule.write_json(&dir.join("final_schedule.json"))?;
        for (algorithm, trace) in &self.traces {
            let name = match algorithm {
                Algorithm::Cmaes => "trace_cmaes.csv",
                Algorithm::Ga => "trace_ga.csv",
            };
            trace.write_csv(&dir.join(name))?;
        }
        Ok(())
    }
}
