//! Evolutionary search for base schedules.
//!
//! [`cma_es`] and [`genetic_algorithm`] are generic over an [`Objective`];
//! [`run_cma_es`], [`run_ga`] and [`evolve`] bind them to genome
//! evaluation through the repair chain.

mod cmaes;
mod ga;

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use cmaes::{cma_es, ContinuousSpace};
pub use ga::genetic_algorithm;

use crate::decode::{EvaluatedIndividual, Evaluator};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Cmaes,
    Ga,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cmaes" => Ok(Algorithm::Cmaes),
            "ga" => Ok(Algorithm::Ga),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub algorithm: Algorithm,
    pub population_size: usize,
    /// Initial CMA-ES step size in normalised gene coordinates.
    pub sigma0: f64,
    /// CMA-ES stops a run when the best costs of the last `10 * n`
    /// evaluations span less than this.
    pub f_tol: f64,
    /// CMA-ES stops a run when the largest coordinate standard deviation,
    /// in option units, falls below this.
    pub x_tol: f64,
    pub ga_parent_fraction: f64,
    pub ga_stall_generations: usize,
    /// Improvements not larger than this do not reset the GA stall counter.
    pub ga_stall_epsilon: f64,
    /// Per-gene reset probability; `None` means `1 / genome_length`.
    pub ga_mutation_rate: Option<f64>,
    pub seed: u64,
    /// Wall-clock budget over all runs. Runs restart until it expires.
    pub time_budget_s: Option<f64>,
    /// Number of runs (first run plus restarts).
    pub max_runs: Option<usize>,
    /// Generation cap per run.
    pub max_generations: Option<usize>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            algorithm: Algorithm::Cmaes,
            population_size: 100,
            sigma0: 0.5,
            f_tol: 100.0,
            x_tol: 1.0,
            ga_parent_fraction: 0.10,
            ga_stall_generations: 500,
            ga_stall_epsilon: 1.0,
            ga_mutation_rate: None,
            seed: 0,
            time_budget_s: Some(60.0),
            max_runs: None,
            max_generations: None,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.population_size < 4 {
            return fail("population_size must be at least 4");
        }
        if !(self.ga_parent_fraction > 0.0 && self.ga_parent_fraction <= 1.0) {
            return fail("ga_parent_fraction must be in (0, 1]");
        }
        if let Some(rate) = self.ga_mutation_rate {
            if !(0.0..=1.0).contains(&rate) {
                return fail("ga_mutation_rate must be in [0, 1]");
            }
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return fail("sigma0 must be positive");
        }
        if self.time_budget_s.is_none() && self.max_runs.is_none() {
            return fail("set a time budget or a run limit");
        }
        if self.max_runs == Some(0) {
            return fail("max_runs must be at least 1");
        }
        Ok(())
    }
}

/// Tracks the run/time budget shared by both engines.
pub(crate) struct Budget {
    started: Instant,
    time: Option<Duration>,
    max_runs: Option<usize>,
}

impl Budget {
    pub(crate) fn new(config: &EvolutionConfig) -> Self {
        Budget {
            started: Instant::now(),
            time: config.time_budget_s.map(Duration::from_secs_f64),
            max_runs: config.max_runs,
        }
    }

    pub(crate) fn time_left(&self) -> bool {
        self.time.map_or(true, |t| self.started.elapsed() < t)
    }

    pub(crate) fn may_start_run(&self, runs_done: usize) -> bool {
        runs_done == 0 || (self.max_runs.map_or(true, |m| runs_done < m) && self.time_left())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    /// Best cost so far within the current run, one entry per generation
    /// (the initial population counts as a generation).
    pub best_cost_per_generation: Vec<f64>,
    /// Run index of each entry.
    pub run_index: Vec<usize>,
    pub evaluations: usize,
    pub restarts: usize,
}

impl RunTrace {
    pub(crate) fn push(&mut self, run: usize, best: f64) {
        self.best_cost_per_generation.push(best);
        self.run_index.push(run);
    }

    /// Entries of run `run`.
    pub fn run(&self, run: usize) -> Vec<f64> {
        self.run_index
            .iter()
            .zip(&self.best_cost_per_generation)
            .filter(|(&r, _)| r == run)
            .map(|(_, &c)| c)
            .collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("run,generation,best_cost\n");
        let mut gen = 0;
        for (k, (&run, &cost)) in self
            .run_index
            .iter()
            .zip(&self.best_cost_per_generation)
            .enumerate()
        {
            if k > 0 && self.run_index[k - 1] != run {
                gen = 0;
            }
            out.push_str(&format!("{run},{gen},{cost}\n"));
            gen += 1;
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Something the engines minimise. Genes are handed over in option units.
pub trait Objective: Sync {
    type Individual: Send + Clone;

    fn evaluate(&self, genes: &[f64]) -> Self::Individual;

    fn cost(&self, individual: &Self::Individual) -> f64;
}

#[derive(Debug, Clone)]
pub struct SearchOutcome<I> {
    pub best: I,
    pub best_cost: f64,
    pub trace: RunTrace,
}

/// Plain function objective; the individual is `(genes, cost)`.
pub struct FnObjective<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FnObjective<F> {
    type Individual = (Vec<f64>, f64);

    fn evaluate(&self, genes: &[f64]) -> Self::Individual {
        (genes.to_vec(), (self.0)(genes))
    }

    fn cost(&self, individual: &Self::Individual) -> f64 {
        individual.1
    }
}

impl Objective for Evaluator<'_> {
    type Individual = EvaluatedIndividual;

    fn evaluate(&self, genes: &[f64]) -> EvaluatedIndividual {
        Evaluator::evaluate(self, genes)
    }

    fn cost(&self, individual: &EvaluatedIndividual) -> f64 {
        individual.cost
    }
}

/// Normalised CMA-ES coordinates for a schedule genome: mean at the middle
/// of every gene's range, one unit spanning all options.
pub fn schedule_space(ev: &Evaluator<'_>) -> ContinuousSpace {
    let counts = ev.layout.option_counts();
    ContinuousSpace {
        initial_mean: vec![0.5; counts.len()],
        scale: counts.iter().map(|&c| c as f64).collect(),
    }
}

pub fn run_cma_es(ev: &Evaluator<'_>, config: &EvolutionConfig) -> Result<(EvaluatedIndividual, RunTrace)> {
    let out = cma_es(ev, &schedule_space(ev), config, &mut |_| {})?;
    Ok((out.best, out.trace))
}

pub fn run_ga(ev: &Evaluator<'_>, config: &EvolutionConfig) -> Result<(EvaluatedIndividual, RunTrace)> {
    let counts = ev.layout.option_counts();
    let out = genetic_algorithm(ev, &counts, config, None, &mut |_| {})?;
    Ok((out.best, out.trace))
}

#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub best: EvaluatedIndividual,
    pub trace: RunTrace,
    /// Up to `keep_best` distinct feasible individuals, cheapest first.
    pub elite: Vec<EvaluatedIndividual>,
}

/// Runs the configured algorithm and keeps the `keep_best` cheapest
/// distinct feasible schedules seen along the way.
pub fn evolve(ev: &Evaluator<'_>, config: &EvolutionConfig, keep_best: usize) -> Result<EvolutionResult> {
    let mut elite: Vec<EvaluatedIndividual> = Vec::new();
    let mut observe = |ind: &EvaluatedIndividual| {
        let Some(schedule) = &ind.schedule else { return };
        if keep_best == 0 {
            return;
        }
        if elite.len() == keep_best && ind.cost >= elite[keep_best - 1].cost {
            return;
        }
        if elite.iter().any(|e| e.schedule.as_ref() == Some(schedule)) {
            return;
        }
        let at = elite.partition_point(|e| e.cost <= ind.cost);
        elite.insert(at, ind.clone());
        elite.truncate(keep_best);
    };
    let out = match config.algorithm {
        Algorithm::Cmaes => cma_es(ev, &schedule_space(ev), config, &mut observe)?,
        Algorithm::Ga => {
            let counts = ev.layout.option_counts();
            genetic_algorithm(ev, &counts, config, None, &mut observe)?
        }
    };
    Ok(EvolutionResult {
        best: out.best,
        trace: out.trace,
        elite,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_csv_restarts_generation_count_per_run() {
        let mut t = RunTrace::default();
        t.push(0, 5.0);
        t.push(0, 4.0);
        t.push(1, 7.5);
        assert_eq!(t.to_csv_string(), "run,generation,best_cost\n0,0,5\n0,1,4\n1,0,7.5\n");
        assert_eq!(t.run(1), vec![7.5]);
    }

    #[test]
    fn config_validation() {
        let mut c = EvolutionConfig::default();
        assert!(c.validate().is_ok());
        c.population_size = 3;
        assert!(c.validate().is_err());
        let c = EvolutionConfig {
            time_budget_s: None,
            max_runs: None,
            ..EvolutionConfig::default()
        };
        assert!(c.validate().is_err());
        let c = EvolutionConfig {
            ga_parent_fraction: 0.0,
            ..EvolutionConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
