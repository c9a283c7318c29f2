//! Harvesting resource allocation under a total budget.
//!
//! The budget fixes the per-sensor *averages* of the harvest rate and of the
//! storage capacity; a scheme decides how to split them among the `V - 1`
//! sensors:
//!
//! * [`uniform_allocation`] gives every sensor the average.
//! * [`almost_fair_allocation`] equalizes the energy-shortage loss probability
//!   across sensors, which reduces to a one-dimensional root search.
//! * [`optimal_allocation`] maximizes delivered traffic directly by simulated
//!   annealing, starting from the almost-fair point.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::FlowError;
use crate::topology::NetworkTopology;

mod anneal;
mod fair;

pub use anneal::{anneal, optimal_allocation, AnnealReport, OptimizerConfig};
pub use fair::{almost_fair_allocation, almost_fair_solution, f_alpha, FairEquation, FairSolution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AllocationError {
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error("invalid optimizer config: {0}")]
    InvalidOptimizerConfig(String),
    #[error("topology needs at least one sensor")]
    TooFewNodes,
    #[error("all generation rates are zero")]
    NoTraffic,
    #[error("alpha must be finite and non-negative, got {0}")]
    InvalidAlpha(f64),
    #[error("f(alpha+) = {value} <= 0 at alpha+ = {alpha_plus}")]
    BracketFailure { alpha_plus: f64, value: f64 },
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Per-sensor averages of harvest rate (packets/s) and storage capacity
/// (packets) that every scheme must preserve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceBudget {
    pub mu_avg: f64,
    pub cap_avg: f64,
}

impl ResourceBudget {
    pub fn new(mu_avg: f64, cap_avg: f64) -> Result<Self, AllocationError> {
        let budget = Self { mu_avg, cap_avg };
        budget.check()?;
        Ok(budget)
    }

    pub fn check(&self) -> Result<(), AllocationError> {
        if !(self.mu_avg.is_finite() && self.mu_avg > 0.0) {
            return Err(AllocationError::InvalidBudget(format!(
                "average harvest rate must be positive, got {}",
                self.mu_avg
            )));
        }
        if !(self.cap_avg.is_finite() && self.cap_avg >= 1.0) {
            return Err(AllocationError::InvalidBudget(format!(
                "average capacity must be at least 1, got {}",
                self.cap_avg
            )));
        }
        Ok(())
    }
}

/// Harvest rate and storage capacity of each sensor (the sink is excluded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestingAllocation {
    pub mu: Vec<f64>,
    pub cap: Vec<f64>,
}

impl HarvestingAllocation {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mean_mu(&self) -> f64 {
        self.mu.iter().sum::<f64>() / self.mu.len() as f64
    }

    pub fn mean_cap(&self) -> f64 {
        self.cap.iter().sum::<f64>() / self.cap.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Uniform,
    #[serde(alias = "almost-fair")]
    Fair,
    Optimal,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Uniform, Scheme::Fair, Scheme::Optimal];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Uniform => "uniform",
            Scheme::Fair => "fair",
            Scheme::Optimal => "optimal",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Scheme::Uniform),
            "fair" | "almost-fair" => Ok(Scheme::Fair),
            "optimal" => Ok(Scheme::Optimal),
            other => Err(format!(
                "unknown scheme {other:?} (expected uniform, fair or optimal)"
            )),
        }
    }
}

/// Every sensor gets exactly the budget averages.
pub fn uniform_allocation(
    node_count: usize,
    budget: &ResourceBudget,
) -> Result<HarvestingAllocation, AllocationError> {
    budget.check()?;
    if node_count < 2 {
        return Err(AllocationError::TooFewNodes);
    }
    let sensors = node_count - 1;
    Ok(HarvestingAllocation {
        mu: vec![budget.mu_avg; sensors],
        cap: vec![budget.cap_avg; sensors],
    })
}

/// Runs one scheme. `optimizer` is only consulted for [`Scheme::Optimal`].
pub fn allocate(
    scheme: Scheme,
    topology: &NetworkTopology,
    budget: &ResourceBudget,
    optimizer: &OptimizerConfig,
) -> Result<HarvestingAllocation, AllocationError> {
    match scheme {
        Scheme::Uniform => uniform_allocation(topology.node_count, budget),
        Scheme::Fair => almost_fair_allocation(topology, budget),
        Scheme::Optimal => optimal_allocation(topology, budget, optimizer),
    }
}

/// Scales `values` so they sum to `target` while staying at or above `floor`.
/// Entries that would drop below the floor are pinned to it and the rest are
/// rescaled again. Requires `target >= floor * len` and positive entries.
pub(crate) fn rescale_with_floor(values: &mut [f64], floor: f64, target: f64) {
    for x in values.iter_mut() {
        *x = x.max(floor);
    }
    let mut pinned = vec![false; values.len()];
    for _ in 0..=values.len() {
        let pinned_total = floor * pinned.iter().filter(|&&p| p).count() as f64;
        let free_total: f64 = values
            .iter()
            .zip(&pinned)
            .filter(|(_, &p)| !p)
            .map(|(x, _)| x)
            .sum();
        if free_total <= 0.0 {
            break;
        }
        let scale = (target - pinned_total) / free_total;
        let mut newly_pinned = false;
        for (x, p) in values.iter_mut().zip(pinned.iter_mut()) {
            if *p {
                continue;
            }
            *x *= scale;
            if *x < floor {
                *x = floor;
                *p = true;
                newly_pinned = true;
            }
        }
        if !newly_pinned {
            break;
        }
    }
}

/// Euclidean projection onto `{x : x_i >= floor, sum x = target}`: a common
/// shift `x_i - tau`, clipped at the floor.
pub(crate) fn shift_with_floor(values: &mut [f64], floor: f64, target: f64) {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    let mut tau = 0.0;
    for k in 1..=n {
        prefix += sorted[k - 1];
        tau = (prefix - (target - (n - k) as f64 * floor)) / k as f64;
        let next = sorted.get(k).copied().unwrap_or(f64::NEG_INFINITY);
        if next - tau <= floor {
            break;
        }
    }
    for x in values.iter_mut() {
        *x = (*x - tau).max(floor);
    }
}
