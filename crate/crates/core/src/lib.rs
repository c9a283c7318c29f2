//! Event-loss analysis and harvesting resource allocation for energy-harvesting
//! wireless sensor networks.
//!
//! * [`topology`]: network model, validation, random generation, JSON files.
//! * [`queueing`]: M|M|1|N energy-queue loss probability.
//! * [`flow`]: flow balance on the routing DAG and the network loss `P_L`.
//! * [`allocation`]: uniform, almost-fair and annealed allocation schemes.
//! * [`simulator`]: discrete-event Monte Carlo check of the analysis.
//! * [`experiment`]: sweeps comparing schemes over budgets and networks.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod experiment;
pub mod flow;
pub mod profile;
pub mod queueing;
pub mod rng;
pub mod roots;
pub mod simulator;
pub mod topology;

pub use allocation::{
    almost_fair_allocation, optimal_allocation, uniform_allocation, AllocationError,
    HarvestingAllocation, OptimizerConfig, ResourceBudget, Scheme,
};
pub use flow::{network_loss, solve_flow, theta_equal_loss, FlowError, FlowSolution};
pub use queueing::{blocking_probability, effective_throughput_factor, Capacity, QueueRatio};
pub use simulator::{simulate, SimConfig, SimError, SimOutcome};
pub use topology::{
    generate_network, load_topology, save_topology, GenerationConfig, NetworkTopology, Routing,
    Violation,
};
