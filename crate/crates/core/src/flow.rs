//! Flow balance on the routing DAG and the resulting network loss probability.
//!
//! The arrival rate at node `v` is its own generation rate plus whatever
//! survives the upstream nodes (energy loss `p_i`) and their links (channel
//! loss `q`):
//!
//! ```text
//! theta_v = lambda_v + (1 - q) * sum_i r_vi * theta_i * (1 - p_i)
//! ```
//!
//! and `p_i` itself depends on `theta_i` through the energy-queue formula.
//! Because routing is acyclic, one sweep in topological order resolves the
//! coupling exactly: by the time a node is visited all of its upstream rates
//! and losses are final.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::HarvestingAllocation;
use crate::queueing::{
    blocking_probability, effective_throughput_factor, Capacity, QueueError, QueueRatio,
};
use crate::topology::{CyclicRouting, NetworkTopology};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error(transparent)]
    CyclicRouting(#[from] CyclicRouting),
    #[error("allocation covers {found} sensors, topology has {expected}")]
    AllocationMismatch { expected: usize, found: usize },
    #[error("invalid allocation for sensor {node}: {source}")]
    InvalidAllocation { node: usize, source: QueueError },
    #[error("harvest rate of sensor {node} is {value}, must be finite and non-negative")]
    InvalidHarvestRate { node: usize, value: f64 },
    #[error("total generation rate is zero")]
    NoTraffic,
    #[error("loss probability must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSolution {
    /// Total report arrival rate at each node, sink last.
    pub theta: Vec<f64>,
    /// Energy-shortage loss probability per node; zero for the sink.
    pub node_loss: Vec<f64>,
    /// Fraction of generated reports that never reach the sink.
    pub network_loss: f64,
}

/// Reusable solver for one topology; caches the topological order.
#[derive(Debug, Clone)]
pub struct FlowSolver<'a> {
    topology: &'a NetworkTopology,
    order: Vec<usize>,
    total_rate: f64,
}

impl<'a> FlowSolver<'a> {
    pub fn new(topology: &'a NetworkTopology) -> Result<Self, FlowError> {
        let order = topology.topological_order()?;
        let total_rate = topology.total_generation_rate();
        if !(total_rate > 0.0) {
            return Err(FlowError::NoTraffic);
        }
        Ok(Self {
            topology,
            order,
            total_rate,
        })
    }

    pub fn topology(&self) -> &NetworkTopology {
        self.topology
    }

    pub fn solve(&self, allocation: &HarvestingAllocation) -> Result<FlowSolution, FlowError> {
        let t = self.topology;
        let sink = t.sink();
        if allocation.mu.len() != t.sensor_count() || allocation.cap.len() != t.sensor_count() {
            return Err(FlowError::AllocationMismatch {
                expected: t.sensor_count(),
                found: allocation.mu.len().min(allocation.cap.len()),
            });
        }
        let survive_channel = 1.0 - t.channel_loss;
        let v = t.node_count;
        let mut theta = vec![0.0; v];
        let mut loss = vec![0.0; v];
        let mut pass = vec![1.0; v];
        let mut lost_rate = 0.0;

        for &node in &self.order {
            let inflow: f64 = t
                .routing
                .predecessors(node)
                .map(|(from, r)| r * theta[from] * pass[from])
                .sum();
            theta[node] = t.generation_rates[node] + survive_channel * inflow;
            if node == sink {
                continue;
            }
            let mu = allocation.mu[node];
            if !(mu.is_finite() && mu >= 0.0) {
                return Err(FlowError::InvalidHarvestRate { node, value: mu });
            }
            let cap = Capacity::new(allocation.cap[node])
                .map_err(|source| FlowError::InvalidAllocation { node, source })?;
            // A node that sees no traffic cannot lose any; p = 0 is also the
            // alpha -> infinity limit.
            if theta[node] > 0.0 {
                let alpha = QueueRatio::new(mu / theta[node])
                    .map_err(|source| FlowError::InvalidAllocation { node, source })?;
                loss[node] = blocking_probability(alpha, cap);
                pass[node] = effective_throughput_factor(alpha, cap);
            }
            // theta (1 - (1 - p)(1 - q)), written without cancellation.
            lost_rate += theta[node] * (loss[node] + t.channel_loss * pass[node]);
        }

        Ok(FlowSolution {
            theta,
            node_loss: loss,
            network_loss: (lost_rate / self.total_rate).clamp(0.0, 1.0),
        })
    }
}

/// Solves the coupled flow-balance / energy-queue system for one allocation.
///
/// `network_loss` in the result is accumulated from per-node losses, which
/// matches `1 - theta_V / sum(lambda)` but stays accurate when the loss is
/// many orders of magnitude below one.
pub fn solve_flow(
    topology: &NetworkTopology,
    allocation: &HarvestingAllocation,
) -> Result<FlowSolution, FlowError> {
    FlowSolver::new(topology)?.solve(allocation)
}

/// `1 - theta_V / sum(lambda)`.
pub fn network_loss(topology: &NetworkTopology, flow: &FlowSolution) -> Result<f64, FlowError> {
    let total = topology.total_generation_rate();
    if !(total > 0.0) {
        return Err(FlowError::NoTraffic);
    }
    Ok((1.0 - flow.theta[topology.sink()] / total).clamp(0.0, 1.0))
}

/// The vectors `R^n lambda` for `n = 0, 1, ...` up to the last nonzero one.
///
/// With nilpotent routing there are at most `V` of them, so any series
/// `sum_n c^n R^n lambda` is a finite sum.
#[derive(Debug, Clone)]
pub struct TrafficSeries {
    terms: Vec<Vec<f64>>,
    sink: usize,
}

impl TrafficSeries {
    pub fn new(topology: &NetworkTopology) -> Result<Self, FlowError> {
        topology.topological_order()?;
        let v = topology.node_count;
        let mut terms = vec![topology.generation_rates.clone()];
        while terms.len() < v {
            let mut next = vec![0.0; v];
            topology.routing.apply(terms.last().unwrap(), &mut next);
            if next.iter().all(|&x| x == 0.0) {
                break;
            }
            terms.push(next);
        }
        Ok(Self {
            terms,
            sink: topology.sink(),
        })
    }

    pub fn terms(&self) -> &[Vec<f64>] {
        &self.terms
    }

    /// `sum_n c^n R^n lambda`.
    pub fn evaluate(&self, c: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.terms[0].len()];
        let mut weight = 1.0;
        for term in &self.terms {
            for (o, x) in out.iter_mut().zip(term) {
                *o += weight * x;
            }
            weight *= c;
        }
        out
    }

    /// `sum_n c^n (sum over sensors of R^n lambda)`, skipping the sink.
    pub fn sensor_total(&self, c: f64) -> f64 {
        let mut weight = 1.0;
        let mut total = 0.0;
        for term in &self.terms {
            let sensors: f64 = term
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != self.sink)
                .map(|(_, x)| x)
                .sum();
            total += weight * sensors;
            weight *= c;
        }
        total
    }
}

/// Arrival rates when every sensor has the same loss probability `p`:
/// `theta = sum_{n < V} (1-q)^n (1-p)^n R^n lambda`.
pub fn theta_equal_loss(topology: &NetworkTopology, p: f64) -> Result<Vec<f64>, FlowError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(FlowError::InvalidProbability(p));
    }
    let series = TrafficSeries::new(topology)?;
    Ok(series.evaluate((1.0 - topology.channel_loss) * (1.0 - p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::tests::chain;
    use approx::assert_relative_eq;

    fn alloc(mu: &[f64], cap: &[f64]) -> HarvestingAllocation {
        HarvestingAllocation {
            mu: mu.to_vec(),
            cap: cap.to_vec(),
        }
    }

    #[test]
    fn single_sensor_balanced_queue() {
        let t = chain(2, &[1.0], 0.0);
        let flow = solve_flow(&t, &alloc(&[1.0], &[1.0])).unwrap();
        assert_eq!(flow.theta, vec![1.0, 0.5]);
        assert_eq!(flow.node_loss, vec![0.5, 0.0]);
        assert_eq!(flow.network_loss, 0.5);
        assert_eq!(network_loss(&t, &flow).unwrap(), 0.5);
    }

    #[test]
    fn abundant_energy_leaves_channel_loss() {
        let t = chain(2, &[0.3], 0.01);
        let flow = solve_flow(&t, &alloc(&[1e9], &[50.0])).unwrap();
        assert_eq!(flow.node_loss[0], 0.0);
        assert_relative_eq!(flow.network_loss, 0.01, max_relative = 1e-12);
    }

    #[test]
    fn micaz_chain_hand_evaluated() {
        let q = 1e-5;
        let t = chain(3, &[0.0233, 0.0233], q);
        let flow = solve_flow(&t, &alloc(&[0.2326, 0.2326], &[2283.0, 2283.0])).unwrap();
        assert!(flow.node_loss[0] < 1e-300 && flow.node_loss[1] < 1e-300);
        // theta_1 = l, theta_2 = l + (1-q) l, theta_3 = (1-q) theta_2.
        let l = 0.0233;
        assert_relative_eq!(flow.theta[1], l * (2.0 - q), max_relative = 1e-15);
        let expected = 1.0 - ((1.0 - q) * (1.0 - q) + (1.0 - q)) / 2.0;
        assert_relative_eq!(flow.network_loss, expected, max_relative = 1e-9);
        assert_relative_eq!(flow.network_loss, 1.5e-5, max_relative = 1e-4);
    }

    #[test]
    fn idle_sensor_loses_nothing() {
        let t = chain(3, &[0.0, 0.5], 0.0);
        let flow = solve_flow(&t, &alloc(&[0.0, 0.5], &[3.0, 3.0])).unwrap();
        assert_eq!(flow.theta[0], 0.0);
        assert_eq!(flow.node_loss[0], 0.0);
        assert_relative_eq!(flow.node_loss[1], 0.25, max_relative = 1e-15);
    }

    #[test]
    fn network_loss_extremes() {
        let t = chain(2, &[2.0], 0.0);
        let mut flow = FlowSolution {
            theta: vec![2.0, 2.0],
            node_loss: vec![0.0, 0.0],
            network_loss: 0.0,
        };
        assert_eq!(network_loss(&t, &flow).unwrap(), 0.0);
        flow.theta[1] = 0.0;
        assert_eq!(network_loss(&t, &flow).unwrap(), 1.0);
        let silent = chain(2, &[0.0], 0.0);
        assert_eq!(network_loss(&silent, &flow), Err(FlowError::NoTraffic));
        assert_eq!(
            solve_flow(&silent, &alloc(&[1.0], &[1.0])),
            Err(FlowError::NoTraffic)
        );
    }

    #[test]
    fn rejects_bad_allocations() {
        let t = chain(3, &[1.0, 1.0], 0.0);
        assert!(matches!(
            solve_flow(&t, &alloc(&[1.0], &[1.0])),
            Err(FlowError::AllocationMismatch { .. })
        ));
        assert!(matches!(
            solve_flow(&t, &alloc(&[1.0, -1.0], &[1.0, 1.0])),
            Err(FlowError::InvalidHarvestRate { node: 1, .. })
        ));
        assert!(matches!(
            solve_flow(&t, &alloc(&[1.0, 1.0], &[1.0, 0.2])),
            Err(FlowError::InvalidAllocation { node: 1, .. })
        ));
        let mut cyclic = t.clone();
        cyclic.routing.set(2, 1, 0.0);
        cyclic.routing.set(0, 1, 1.0);
        assert_eq!(
            solve_flow(&cyclic, &alloc(&[1.0, 1.0], &[1.0, 1.0])),
            Err(FlowError::CyclicRouting(CyclicRouting))
        );
    }

    #[test]
    fn equal_loss_series_on_chain() {
        let t = chain(3, &[1.0, 1.0], 0.0);
        assert_eq!(theta_equal_loss(&t, 1.0).unwrap(), vec![1.0, 1.0, 0.0]);
        assert_eq!(theta_equal_loss(&t, 0.0).unwrap(), vec![1.0, 2.0, 2.0]);
        assert_eq!(theta_equal_loss(&t, 0.5).unwrap(), vec![1.0, 1.5, 0.75]);
        assert!(theta_equal_loss(&t, 1.5).is_err());
    }

    #[test]
    fn fixed_point_is_reproduced() {
        let t = chain(4, &[0.3, 0.2, 0.1], 0.05);
        let a = alloc(&[0.25, 0.4, 0.5], &[3.0, 2.5, 7.0]);
        let flow = solve_flow(&t, &a).unwrap();
        for node in 0..4 {
            let inflow: f64 = t
                .routing
                .predecessors(node)
                .map(|(i, r)| r * flow.theta[i] * (1.0 - flow.node_loss[i]))
                .sum();
            let rhs = t.generation_rates[node] + (1.0 - t.channel_loss) * inflow;
            assert_relative_eq!(flow.theta[node], rhs, max_relative = 1e-12);
        }
        assert_relative_eq!(
            flow.network_loss,
            network_loss(&t, &flow).unwrap(),
            epsilon = 1e-12
        );
    }
}
