//! Almost-fair allocation: every sensor gets the same capacity `N` and the
//! same ratio `alpha = mu_v / theta_v`, hence the same loss probability `p`.
//!
//! With a common `p` the arrival rates follow from the finite series
//! `theta = sum_n ((1-q)(1-p))^n R^n lambda`, and the harvest budget pins
//! `alpha` through
//!
//! ```text
//! f(alpha) = alpha * sum_n (1-q)^n g(alpha)^n * S_n - mu (V-1) = 0
//! g(alpha) = (alpha - alpha^(N+1)) / (1 - alpha^(N+1))
//! ```
//!
//! where `S_n` is the sensor total of `R^n lambda`. `f` is increasing with
//! `f(0) < 0`, so the root is found by bisection once an upper bracket is
//! known. For `alpha >= 1`, `g >= N/(N+1)`, which gives the bracket
//! `alpha+ = max(1, mu (V-1) / S)` with `S` the series evaluated at
//! `g = N/(N+1)`.

use crate::flow::TrafficSeries;
use crate::queueing::{effective_throughput_factor, Capacity, QueueRatio};
use crate::roots::{bisect_increasing, BisectionConfig};
use crate::topology::NetworkTopology;

use super::{AllocationError, HarvestingAllocation, ResourceBudget};

const MAX_BISECTION_STEPS: usize = 200;
const WIDTH_TOLERANCE: f64 = 1e-14;
const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// `f(alpha)` for one topology and budget, with the series precomputed.
#[derive(Debug, Clone)]
pub struct FairEquation {
    series: TrafficSeries,
    survive_channel: f64,
    capacity: Capacity,
    /// `mu (V - 1)`.
    harvest_total: f64,
}

impl FairEquation {
    pub fn new(
        topology: &NetworkTopology,
        budget: &ResourceBudget,
    ) -> Result<Self, AllocationError> {
        budget.check()?;
        if topology.node_count < 2 {
            return Err(AllocationError::TooFewNodes);
        }
        let series = TrafficSeries::new(topology)?;
        Ok(Self {
            series,
            survive_channel: 1.0 - topology.channel_loss,
            capacity: Capacity::new(budget.cap_avg)
                .map_err(|e| AllocationError::InvalidBudget(e.to_string()))?,
            harvest_total: budget.mu_avg * topology.sensor_count() as f64,
        })
    }

    pub fn harvest_total(&self) -> f64 {
        self.harvest_total
    }

    fn ratio(alpha: f64) -> Result<QueueRatio, AllocationError> {
        QueueRatio::new(alpha).map_err(|_| AllocationError::InvalidAlpha(alpha))
    }

    pub fn value(&self, alpha: f64) -> Result<f64, AllocationError> {
        let g = effective_throughput_factor(Self::ratio(alpha)?, self.capacity);
        Ok(alpha * self.series.sensor_total(self.survive_channel * g) - self.harvest_total)
    }

    /// Upper end of the search bracket.
    pub fn alpha_plus(&self) -> f64 {
        let n = self.capacity.get();
        let total = self
            .series
            .sensor_total(self.survive_channel * n / (n + 1.0));
        (self.harvest_total / total).max(1.0)
    }

    /// Per-node arrival rates when every sensor runs at ratio `alpha`.
    pub fn theta(&self, alpha: f64) -> Result<Vec<f64>, AllocationError> {
        let g = effective_throughput_factor(Self::ratio(alpha)?, self.capacity);
        Ok(self.series.evaluate(self.survive_channel * g))
    }
}

/// Evaluates `f(alpha)`; `f(0) = -mu (V-1)`.
pub fn f_alpha(
    alpha: f64,
    topology: &NetworkTopology,
    budget: &ResourceBudget,
) -> Result<f64, AllocationError> {
    FairEquation::new(topology, budget)?.value(alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairSolution {
    pub allocation: HarvestingAllocation,
    /// Common ratio `mu_v / theta_v`.
    pub alpha: f64,
    pub alpha_plus: f64,
    /// `f(alpha)` at the returned root.
    pub residual: f64,
    pub iterations: usize,
}

/// Almost-fair allocation together with the root-search diagnostics.
pub fn almost_fair_solution(
    topology: &NetworkTopology,
    budget: &ResourceBudget,
) -> Result<FairSolution, AllocationError> {
    let equation = FairEquation::new(topology, budget)?;
    if !(topology.total_generation_rate() > 0.0) {
        return Err(AllocationError::NoTraffic);
    }
    let alpha_plus = equation.alpha_plus();
    let upper = equation.value(alpha_plus)?;
    if !(upper >= 0.0) {
        return Err(AllocationError::BracketFailure {
            alpha_plus,
            value: upper,
        });
    }
    let config = BisectionConfig {
        value_tolerance: RESIDUAL_TOLERANCE * equation.harvest_total(),
        width_tolerance: WIDTH_TOLERANCE * alpha_plus,
        max_iterations: MAX_BISECTION_STEPS,
    };
    let root = bisect_increasing(
        // The bracket only contains valid ratios, so value() cannot fail.
        |alpha| equation.value(alpha).unwrap_or(f64::NAN),
        0.0,
        alpha_plus,
        &config,
    )
    .map_err(|_| AllocationError::BracketFailure {
        alpha_plus,
        value: upper,
    })?;

    let theta = equation.theta(root.root)?;
    let sensors = topology.sensor_count();
    let allocation = HarvestingAllocation {
        mu: theta[..sensors].iter().map(|t| root.root * t).collect(),
        cap: vec![budget.cap_avg; sensors],
    };
    Ok(FairSolution {
        allocation,
        alpha: root.root,
        alpha_plus,
        residual: root.residual,
        iterations: root.iterations,
    })
}

/// Equal node loss probability across sensors (see module docs).
pub fn almost_fair_allocation(
    topology: &NetworkTopology,
    budget: &ResourceBudget,
) -> Result<HarvestingAllocation, AllocationError> {
    almost_fair_solution(topology, budget).map(|s| s.allocation)
}
