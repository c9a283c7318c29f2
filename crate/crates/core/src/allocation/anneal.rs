//! Simulated annealing over `(mu_v, N_v)` with the budget as hard equality
//! constraints.
//!
//! Each step perturbs one sensor, either `ln mu_v` or `N_v` by a Gaussian
//! step, then projects back onto the feasible set: the harvest vector is
//! rescaled to its budgeted mean (never below `mu_min`), the capacity vector is
//! shifted to its budgeted mean and clipped at 1. The search minimizes
//! `ln P_L` from the analytic flow solution, starts at the almost-fair
//! allocation and keeps the best point seen, so it never returns anything
//! worse than that start.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::flow::FlowSolver;
use crate::rng::derive_seed;
use crate::topology::NetworkTopology;

use super::{
    almost_fair_allocation, rescale_with_floor, shift_with_floor, AllocationError,
    HarvestingAllocation, ResourceBudget,
};

/// Acceptance rate is re-examined every this many steps.
const ADAPT_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub seed: u64,
    pub iterations: usize,
    /// Initial temperature as a fraction of `|ln P_L|` at the start point.
    pub initial_temperature: f64,
    /// Geometric cooling factor applied every step.
    pub cooling_rate: f64,
    /// Standard deviation of the `ln mu_v` step.
    pub mu_step: f64,
    /// Standard deviation of the `N_v` step, relative to the budgeted mean.
    pub cap_step: f64,
    /// Trailing share of the iterations run at zero temperature.
    pub greedy_fraction: f64,
    /// Lower bound on any `mu_v`, relative to the budgeted mean.
    pub mu_floor: f64,
    /// Independent chains; the best wins, ties to the lowest index.
    pub restarts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            iterations: 20_000,
            initial_temperature: 0.1,
            cooling_rate: 0.999,
            mu_step: 0.3,
            cap_step: 0.1,
            greedy_fraction: 0.1,
            mu_floor: 1e-6,
            restarts: 1,
        }
    }
}

impl OptimizerConfig {
    pub fn check(&self) -> Result<(), AllocationError> {
        let bad = |msg: &str| Err(AllocationError::InvalidOptimizerConfig(msg.to_owned()));
        if !(self.initial_temperature.is_finite() && self.initial_temperature >= 0.0) {
            return bad("initial_temperature must be non-negative");
        }
        if !(self.cooling_rate > 0.0 && self.cooling_rate <= 1.0) {
            return bad("cooling_rate must lie in (0, 1]");
        }
        if !(self.mu_step > 0.0 && self.cap_step > 0.0) {
            return bad("step scales must be positive");
        }
        if !(0.0..=1.0).contains(&self.greedy_fraction) {
            return bad("greedy_fraction must lie in [0, 1]");
        }
        if !(self.mu_floor > 0.0 && self.mu_floor < 1.0) {
            return bad("mu_floor must lie in (0, 1)");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealReport {
    pub allocation: HarvestingAllocation,
    pub network_loss: f64,
    /// Loss of the almost-fair starting point.
    pub start_loss: f64,
    pub accepted: usize,
    pub improved: usize,
}

fn energy(loss: f64) -> f64 {
    loss.max(f64::MIN_POSITIVE).ln()
}

struct Chain<'a> {
    solver: &'a FlowSolver<'a>,
    budget: ResourceBudget,
    config: &'a OptimizerConfig,
}

impl Chain<'_> {
    fn loss(&self, a: &HarvestingAllocation) -> f64 {
        self.solver
            .solve(a)
            .map(|f| f.network_loss)
            .unwrap_or(f64::INFINITY)
    }

    fn run(&self, start: &HarvestingAllocation, start_loss: f64, seed: u64) -> AnnealReport {
        let config = self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sensors = start.len();
        let mu_total = self.budget.mu_avg * sensors as f64;
        let cap_total = self.budget.cap_avg * sensors as f64;
        let mu_floor = config.mu_floor * self.budget.mu_avg;

        let mut current = start.clone();
        let mut current_energy = energy(start_loss);
        let mut best = current.clone();
        let mut best_loss = start_loss;
        let mut temperature = config.initial_temperature * current_energy.abs().max(1e-3);
        let annealed = ((1.0 - config.greedy_fraction) * config.iterations as f64).round() as usize;
        let (mut mu_step, mut cap_step) = (config.mu_step, config.cap_step * self.budget.cap_avg);
        let (mut accepted, mut improved, mut window_accepted) = (0, 0, 0);

        for step in 0..config.iterations {
            let node = rng.random_range(0..sensors);
            let mut candidate = current.clone();
            let z: f64 = rng.sample(StandardNormal);
            if rng.random_bool(0.5) {
                candidate.mu[node] *= (mu_step * z).exp();
                rescale_with_floor(&mut candidate.mu, mu_floor, mu_total);
            } else {
                candidate.cap[node] += cap_step * z;
                shift_with_floor(&mut candidate.cap, 1.0, cap_total);
            }
            let loss = self.loss(&candidate);
            let delta = energy(loss) - current_energy;
            let accept = if step < annealed {
                delta <= 0.0 || rng.random::<f64>() < (-delta / temperature).exp()
            } else {
                delta < 0.0
            };
            if accept {
                accepted += 1;
                window_accepted += 1;
                current = candidate;
                current_energy += delta;
                if loss < best_loss {
                    best_loss = loss;
                    best = current.clone();
                    improved += 1;
                }
            }
            temperature *= config.cooling_rate;
            if (step + 1) % ADAPT_WINDOW == 0 {
                let rate = window_accepted as f64 / ADAPT_WINDOW as f64;
                let factor = if rate > 0.5 {
                    1.25
                } else if rate < 0.2 {
                    0.8
                } else {
                    1.0
                };
                mu_step = (mu_step * factor).clamp(1e-4, 2.0);
                cap_step = (cap_step * factor).clamp(1e-6, self.budget.cap_avg);
                window_accepted = 0;
            }
        }
        AnnealReport {
            allocation: best,
            network_loss: best_loss,
            start_loss,
            accepted,
            improved,
        }
    }
}

/// Annealing run with full diagnostics.
pub fn anneal(
    topology: &NetworkTopology,
    budget: &ResourceBudget,
    config: &OptimizerConfig,
) -> Result<AnnealReport, AllocationError> {
    config.check()?;
    budget.check()?;
    let start = almost_fair_allocation(topology, budget)?;
    let solver = FlowSolver::new(topology)?;
    let start_loss = solver.solve(&start)?.network_loss;
    if start.len() < 2 || config.iterations == 0 {
        // One sensor must take the whole budget; nothing to search.
        return Ok(AnnealReport {
            allocation: start,
            network_loss: start_loss,
            start_loss,
            accepted: 0,
            improved: 0,
        });
    }
    let chain = Chain {
        solver: &solver,
        budget: *budget,
        config,
    };
    let reports: Vec<AnnealReport> = (0..config.restarts)
        .into_par_iter()
        .map(|i| chain.run(&start, start_loss, derive_seed(config.seed, i as u64)))
        .collect();
    // min_by keeps the first of equal elements.
    Ok(reports
        .into_iter()
        .min_by(|a, b| a.network_loss.total_cmp(&b.network_loss))
        .expect("at least one restart"))
}

/// Best allocation found by simulated annealing; never worse than almost-fair.
pub fn optimal_allocation(
    topology: &NetworkTopology,
    budget: &ResourceBudget,
    config: &OptimizerConfig,
) -> Result<HarvestingAllocation, AllocationError> {
    anneal(topology, budget, config).map(|r| r.allocation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::uniform_allocation;
    use crate::flow::solve_flow;
    use crate::topology::tests::chain;
    use crate::topology::Routing;
    use approx::assert_relative_eq;

    fn quick() -> OptimizerConfig {
        OptimizerConfig {
            iterations: 3000,
            seed: 9,
            ..Default::default()
        }
    }

    #[test]
    fn single_sensor_gets_everything() {
        let t = chain(2, &[0.3], 1e-5);
        let b = ResourceBudget::new(0.2, 7.0).unwrap();
        let a = optimal_allocation(&t, &b, &quick()).unwrap();
        assert_relative_eq!(a.mu[0], 0.2, max_relative = 1e-9);
        assert_eq!(a.cap, vec![7.0]);
    }

    #[test]
    fn never_worse_than_fair_and_feasible() {
        let t = chain(5, &[0.1, 0.05, 0.02, 0.1], 1e-4);
        let b = ResourceBudget::new(0.3, 4.0).unwrap();
        let report = anneal(&t, &b, &quick()).unwrap();
        assert!(report.network_loss <= report.start_loss);
        let a = &report.allocation;
        assert_relative_eq!(a.mean_mu(), 0.3, max_relative = 1e-12);
        assert_relative_eq!(a.mean_cap(), 4.0, max_relative = 1e-12);
        assert!(a.cap.iter().all(|&n| n >= 1.0));
        assert!(a.mu.iter().all(|&m| m >= 0.3e-6));
        let flow = solve_flow(&t, a).unwrap();
        assert_eq!(flow.network_loss, report.network_loss);
    }

    #[test]
    fn deterministic_for_seed() {
        let t = chain(4, &[0.1, 0.1, 0.1], 1e-4);
        let b = ResourceBudget::new(0.2, 3.0).unwrap();
        let mut config = quick();
        config.restarts = 3;
        let a = optimal_allocation(&t, &b, &config).unwrap();
        let b2 = optimal_allocation(&t, &b, &config).unwrap();
        assert_eq!(a, b2);
    }

    #[test]
    fn symmetric_star_stays_symmetric_in_objective() {
        let sensors = 5;
        let next: Vec<Option<usize>> = (0..=sensors)
            .map(|i| (i < sensors).then_some(sensors))
            .collect();
        let mut rates = vec![0.05; sensors + 1];
        rates[sensors] = 0.0;
        let t = NetworkTopology {
            node_count: sensors + 1,
            positions: None,
            routing: Routing::from_next_hops(&next),
            generation_rates: rates,
            channel_loss: 1e-5,
        };
        let b = ResourceBudget::new(0.06, 5.0).unwrap();
        let uniform = solve_flow(&t, &uniform_allocation(t.node_count, &b).unwrap()).unwrap();
        let optimal = solve_flow(&t, &optimal_allocation(&t, &b, &quick()).unwrap()).unwrap();
        let sink = t.sink();
        assert_relative_eq!(
            optimal.theta[sink],
            uniform.theta[sink],
            max_relative = 1e-6
        );
    }

    #[test]
    fn rejects_bad_config() {
        let t = chain(3, &[0.1, 0.1], 0.0);
        let b = ResourceBudget::new(0.2, 3.0).unwrap();
        let config = OptimizerConfig {
            cooling_rate: 1.5,
            ..Default::default()
        };
        assert!(matches!(
            optimal_allocation(&t, &b, &config),
            Err(AllocationError::InvalidOptimizerConfig(_))
        ));
    }
}
