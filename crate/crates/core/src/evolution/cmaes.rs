//! (mu/mu_w, lambda)-CMA-ES with cumulative step-size adaptation, rank-one
//! and rank-mu covariance updates, and restarts under a budget.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{Budget, EvolutionConfig, Objective, RunTrace, SearchOutcome};
use crate::error::Result;

/// Search coordinates: the objective sees `x[i] * scale[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousSpace {
    pub initial_mean: Vec<f64>,
    pub scale: Vec<f64>,
}

struct Strategy {
    n: usize,
    lambda: usize,
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
    eigen_interval: usize,
}

impl Strategy {
    fn new(n: usize, lambda: usize) -> Self {
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (0..mu)
            .map(|i| (mu as f64 + 0.5).ln() - ((i + 1) as f64).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        // Lazy eigendecomposition; for long genomes the O(n^3) update is
        // spaced out further so that it does not dominate evaluation time.
        let lazy = (1.0 / ((c_1 + c_mu) * nf * 10.0)).floor() as usize;
        let eigen_interval = lazy.max(n / 50).max(1);
        Strategy {
            n,
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
            eigen_interval,
        }
    }
}

struct Distribution {
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    basis: DMatrix<f64>,
    /// Square roots of the covariance eigenvalues.
    scales: DVector<f64>,
    path_sigma: DVector<f64>,
    path_c: DVector<f64>,
    generation: usize,
}

impl Distribution {
    fn new(mean: Vec<f64>, sigma: f64) -> Self {
        let n = mean.len();
        Distribution {
            mean: DVector::from_vec(mean),
            sigma,
            cov: DMatrix::identity(n, n),
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            path_sigma: DVector::zeros(n),
            path_c: DVector::zeros(n),
            generation: 0,
        }
    }

    /// Refreshes `basis`/`scales` from `cov`. False if the covariance is no
    /// longer positive definite.
    fn decompose(&mut self) -> bool {
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        if eig.eigenvalues.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return false;
        }
        self.cov = sym;
        self.scales = eig.eigenvalues.map(f64::sqrt);
        self.basis = eig.eigenvectors;
        true
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let n = self.mean.len();
        let z = DVector::from_fn(n, |i, _| self.scales[i] * rng.sample::<f64, _>(StandardNormal));
        &self.basis * z
    }

    /// `C^{-1/2} v` using the current eigenbasis.
    fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut w = self.basis.tr_mul(v);
        for (x, s) in w.iter_mut().zip(self.scales.iter()) {
            *x /= s;
        }
        &self.basis * w
    }

    fn update(&mut self, st: &Strategy, steps: &[&DVector<f64>]) {
        let n = st.n as f64;
        let mut y_w = DVector::zeros(st.n);
        for (w, y) in st.weights.iter().zip(steps) {
            y_w.axpy(*w, y, 1.0);
        }
        self.mean.axpy(self.sigma, &y_w, 1.0);

        let cs = st.c_sigma;
        let whitened = self.whiten(&y_w);
        self.path_sigma *= 1.0 - cs;
        self.path_sigma
            .axpy((cs * (2.0 - cs) * st.mu_eff).sqrt(), &whitened, 1.0);

        self.generation += 1;
        let ps_norm = self.path_sigma.norm();
        let h_sigma = ps_norm
            / (1.0 - (1.0 - cs).powi(2 * self.generation as i32)).sqrt()
            / st.chi_n
            < 1.4 + 2.0 / (n + 1.0);
        let cc = st.c_c;
        self.path_c *= 1.0 - cc;
        if h_sigma {
            self.path_c.axpy((cc * (2.0 - cc) * st.mu_eff).sqrt(), &y_w, 1.0);
        }
        let delta = if h_sigma { 0.0 } else { cc * (2.0 - cc) };

        let mut rank_mu = DMatrix::zeros(st.n, st.n);
        for (w, y) in st.weights.iter().zip(steps) {
            rank_mu.ger(*w, y, y, 1.0);
        }
        self.cov *= 1.0 - st.c_1 - st.c_mu + st.c_1 * delta;
        self.cov.ger(st.c_1, &self.path_c, &self.path_c, 1.0);
        self.cov += rank_mu * st.c_mu;

        self.sigma *= ((cs / st.d_sigma) * (ps_norm / st.chi_n - 1.0)).exp();
    }

    /// Largest coordinate standard deviation, in objective units.
    fn max_std(&self, scale: &[f64]) -> f64 {
        (0..self.mean.len())
            .map(|i| self.sigma * self.cov[(i, i)].sqrt() * scale[i])
            .fold(0.0, f64::max)
    }
}

/// Minimises `objective` over `space`. The first run starts at
/// `space.initial_mean`; restarts draw a fresh mean uniformly from the unit
/// box. `observer` sees every evaluated individual in a deterministic order.
pub fn cma_es<O: Objective>(
    objective: &O,
    space: &ContinuousSpace,
    config: &EvolutionConfig,
    observer: &mut dyn FnMut(&O::Individual),
) -> Result<SearchOutcome<O::Individual>> {
    config.validate()?;
    let n = space.initial_mean.len();
    assert_eq!(space.scale.len(), n, "scale and mean lengths differ");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let budget = Budget::new(config);
    let mut trace = RunTrace::default();

    if n == 0 {
        let ind = objective.evaluate(&[]);
        observer(&ind);
        let cost = objective.cost(&ind);
        trace.push(0, cost);
        trace.evaluations = 1;
        return Ok(SearchOutcome {
            best: ind,
            best_cost: cost,
            trace,
        });
    }

    let st = Strategy::new(n, config.population_size);
    let f_window = (10 * n).div_ceil(st.lambda).max(2);
    let mut best: Option<(O::Individual, f64)> = None;
    let mut run = 0;
    while budget.may_start_run(run) {
        let mean = if run == 0 {
            space.initial_mean.clone()
        } else {
            (0..n).map(|_| rng.gen::<f64>()).collect()
        };
        let mut dist = Distribution::new(mean, config.sigma0);
        let mut run_best = f64::INFINITY;
        let mut recent: VecDeque<f64> = VecDeque::with_capacity(f_window + 1);
        let mut generation = 0;
        loop {
            let steps: Vec<DVector<f64>> = (0..st.lambda).map(|_| dist.sample(&mut rng)).collect();
            let genes: Vec<Vec<f64>> = steps
                .iter()
                .map(|y| {
                    (0..n)
                        .map(|i| (dist.mean[i] + dist.sigma * y[i]) * space.scale[i])
                        .collect()
                })
                .collect();
            let evaluated: Vec<O::Individual> =
                genes.par_iter().map(|g| objective.evaluate(g)).collect();
            trace.evaluations += evaluated.len();
            evaluated.iter().for_each(|ind| observer(ind));
            let costs: Vec<f64> = evaluated.iter().map(|ind| objective.cost(ind)).collect();
            let mut order: Vec<usize> = (0..st.lambda).collect();
            order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));

            let gen_best = costs[order[0]];
            if gen_best < run_best {
                run_best = gen_best;
            }
            if best.as_ref().map_or(true, |(_, c)| gen_best < *c) {
                best = Some((evaluated[order[0]].clone(), gen_best));
            }
            trace.push(run, run_best);

            let selected: Vec<&DVector<f64>> = order[..st.mu].iter().map(|&k| &steps[k]).collect();
            dist.update(&st, &selected);
            generation += 1;

            recent.push_back(gen_best);
            if recent.len() > f_window {
                recent.pop_front();
            }
            let f_spread = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - recent.iter().copied().fold(f64::INFINITY, f64::min);
            let degenerate = !(dist.sigma.is_finite() && dist.sigma > 0.0)
                || (generation % st.eigen_interval == 0 && !dist.decompose());
            let stop = degenerate
                || config.max_generations.is_some_and(|m| generation >= m)
                || (recent.len() == f_window && f_spread < config.f_tol)
                || dist.max_std(&space.scale) < config.x_tol
                || !budget.time_left();
            if stop {
                break;
            }
        }
        run += 1;
    }
    trace.restarts = run - 1;
    let (best, best_cost) = best.expect("at least one generation was evaluated");
    Ok(SearchOutcome {
        best,
        best_cost,
        trace,
    })
}
