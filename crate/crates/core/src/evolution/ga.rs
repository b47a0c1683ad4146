//! Integer-gene genetic algorithm: truncation selection of the top parents,
//! single-point crossover, uniform-reset mutation, parents carried over.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Budget, EvolutionConfig, Objective, RunTrace, SearchOutcome};
use crate::error::{Error, Result};

fn random_genome(rng: &mut ChaCha8Rng, counts: &[usize]) -> Vec<f64> {
    counts.iter().map(|&c| rng.gen_range(0..c.max(1)) as f64).collect()
}

/// Minimises `objective` over integer genes `0..counts[i]`. A run stops
/// once the best cost has not improved by more than `ga_stall_epsilon` for
/// `ga_stall_generations` generations; runs restart from a fresh random
/// population while the budget allows. `initial_population` seeds the
/// first run only.
pub fn genetic_algorithm<O: Objective>(
    objective: &O,
    counts: &[usize],
    config: &EvolutionConfig,
    initial_population: Option<Vec<Vec<f64>>>,
    observer: &mut dyn FnMut(&O::Individual),
) -> Result<SearchOutcome<O::Individual>> {
    config.validate()?;
    let pop = config.population_size;
    let len = counts.len();
    if let Some(init) = &initial_population {
        if init.len() != pop || init.iter().any(|g| g.len() != len) {
            return Err(Error::Config(
                "initial population does not match population size and genome length".into(),
            ));
        }
    }
    let n_parents = ((config.ga_parent_fraction * pop as f64).ceil() as usize).clamp(2, pop);
    let mutation_rate = config
        .ga_mutation_rate
        .unwrap_or(if len == 0 { 0.0 } else { 1.0 / len as f64 });

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let budget = Budget::new(config);
    let mut trace = RunTrace::default();
    let mut best: Option<(O::Individual, f64)> = None;
    let mut seed_population = initial_population;
    let mut run = 0;

    while budget.may_start_run(run) {
        let genomes: Vec<Vec<f64>> = seed_population
            .take()
            .unwrap_or_else(|| (0..pop).map(|_| random_genome(&mut rng, counts)).collect());
        let mut population: Vec<(Vec<f64>, O::Individual, f64)> = {
            let evaluated: Vec<O::Individual> =
                genomes.par_iter().map(|g| objective.evaluate(g)).collect();
            trace.evaluations += evaluated.len();
            evaluated.iter().for_each(|ind| observer(ind));
            genomes
                .into_iter()
                .zip(evaluated)
                .map(|(g, ind)| {
                    let c = objective.cost(&ind);
                    (g, ind, c)
                })
                .collect()
        };

        let mut run_best = f64::INFINITY;
        let mut reference = f64::INFINITY;
        let mut stall = 0usize;
        let mut generation = 0usize;
        loop {
            population.sort_by(|a, b| a.2.total_cmp(&b.2));
            let gen_best = population[0].2;
            if gen_best < run_best {
                run_best = gen_best;
            }
            if best.as_ref().map_or(true, |(_, c)| gen_best < *c) {
                best = Some((population[0].1.clone(), gen_best));
            }
            trace.push(run, run_best);

            if generation > 0 {
                if run_best < reference - config.ga_stall_epsilon {
                    reference = run_best;
                    stall = 0;
                } else {
                    stall += 1;
                }
            } else {
                reference = run_best;
            }
            if stall >= config.ga_stall_generations
                || config.max_generations.is_some_and(|m| generation >= m)
                || !budget.time_left()
            {
                break;
            }

            population.truncate(n_parents);
            let children: Vec<Vec<f64>> = (0..pop - n_parents)
                .map(|_| {
                    let a = rng.gen_range(0..n_parents);
                    let mut b = rng.gen_range(0..n_parents - 1);
                    if b >= a {
                        b += 1;
                    }
                    let cut = if len > 1 { rng.gen_range(1..len) } else { len };
                    let mut child: Vec<f64> = population[a].0[..cut]
                        .iter()
                        .chain(&population[b].0[cut..])
                        .copied()
                        .collect();
                    for (g, &c) in child.iter_mut().zip(counts) {
                        if mutation_rate > 0.0 && rng.gen::<f64>() < mutation_rate {
                            *g = rng.gen_range(0..c.max(1)) as f64;
                        }
                    }
                    child
                })
                .collect();
            let evaluated: Vec<O::Individual> =
                children.par_iter().map(|g| objective.evaluate(g)).collect();
            trace.evaluations += evaluated.len();
            evaluated.iter().for_each(|ind| observer(ind));
            population.extend(children.into_iter().zip(evaluated).map(|(g, ind)| {
                let c = objective.cost(&ind);
                (g, ind, c)
            }));
            generation += 1;
        }
        run += 1;
    }
    trace.restarts = run - 1;
    let (best, best_cost) = best.expect("at least one population was evaluated");
    Ok(SearchOutcome {
        best,
        best_cost,
        trace,
    })
}
