//! Parameter sweeps comparing the allocation schemes, analytically and (if
//! asked) by simulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{allocate, OptimizerConfig, ResourceBudget, Scheme};
use crate::flow::solve_flow;
use crate::profile::{ParameterProfile, MICAZ_SOLAR};
use crate::rng::derive_seed;
use crate::simulator::{simulate, SimConfig};
use crate::topology::{generate_network, GenerateError, GenerationConfig, NetworkTopology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Topology JSON file; when absent, networks are generated.
    pub topology_file: Option<std::path::PathBuf>,
    pub generation: GenerationSettings,
    /// Generated networks (ignored with a topology file).
    pub networks: usize,
    pub mu_grid: Vec<f64>,
    pub cap_grid: Vec<f64>,
    /// Instead of the grid, draw this many budgets per network, log-uniform
    /// over `mu_range` x `cap_range`.
    pub random_budgets: Option<usize>,
    pub mu_range: [f64; 2],
    pub cap_range: [f64; 2],
    pub schemes: Vec<Scheme>,
    /// Overrides the profile's channel loss.
    pub channel_loss: Option<f64>,
    pub profile: String,
    pub seed: u64,
    /// Reports per simulation run; 0 skips simulation.
    pub sim_events: u64,
    pub optimizer: OptimizerConfig,
    pub output_dir: Option<std::path::PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSettings {
    pub nodes: usize,
    pub disk_radius: f64,
    pub connectivity_radius: f64,
    pub max_retries: usize,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        let g = GenerationConfig::default();
        Self {
            nodes: g.node_count,
            disk_radius: g.disk_radius,
            connectivity_radius: g.connectivity_radius,
            max_retries: g.max_retries,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            topology_file: None,
            generation: GenerationSettings::default(),
            networks: 100,
            mu_grid: vec![MICAZ_SOLAR.harvest_rate],
            cap_grid: vec![MICAZ_SOLAR.capacity],
            random_budgets: None,
            mu_range: [0.01, 10.0],
            cap_range: [1.0, 10_000.0],
            schemes: Scheme::ALL.to_vec(),
            channel_loss: None,
            profile: MICAZ_SOLAR.name.to_owned(),
            seed: 0,
            sim_events: 0,
            optimizer: OptimizerConfig::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn check(&self) -> Result<(), String> {
        if self.schemes.is_empty() {
            return Err("no schemes selected".into());
        }
        if self.random_budgets.is_none() && (self.mu_grid.is_empty() || self.cap_grid.is_empty()) {
            return Err("budget grid is empty".into());
        }
        if self.random_budgets == Some(0) {
            return Err("random_budgets must be at least 1".into());
        }
        if self.mu_grid.iter().any(|&m| !(m.is_finite() && m > 0.0)) {
            return Err("mu grid values must be positive".into());
        }
        if self.cap_grid.iter().any(|&n| !(n.is_finite() && n >= 1.0)) {
            return Err("capacity grid values must be at least 1".into());
        }
        let [mu_lo, mu_hi] = self.mu_range;
        let [cap_lo, cap_hi] = self.cap_range;
        if !(mu_lo > 0.0 && mu_lo <= mu_hi && cap_lo >= 1.0 && cap_lo <= cap_hi) {
            return Err("invalid budget ranges".into());
        }
        if self.topology_file.is_none() && self.networks == 0 {
            return Err("networks must be at least 1".into());
        }
        if let Some(q) = self.channel_loss {
            if !(0.0..1.0).contains(&q) {
                return Err(format!("channel loss must lie in [0, 1), got {q}"));
            }
        }
        self.profile()?;
        self.optimizer.check().map_err(|e| e.to_string())
    }

    pub fn profile(&self) -> Result<ParameterProfile, String> {
        ParameterProfile::by_name(&self.profile)
            .ok_or_else(|| format!("unknown profile {:?}", self.profile))
    }

    pub fn channel_loss(&self) -> f64 {
        self.channel_loss.unwrap_or_else(|| {
            self.profile()
                .map_or(MICAZ_SOLAR.channel_loss, |p| p.channel_loss)
        })
    }

    /// Generates `networks` topologies, network `i` seeded from `(seed, i)`.
    pub fn generate_networks(&self) -> Result<Vec<NetworkTopology>, GenerateError> {
        let profile = self.profile().map_err(GenerateError::InvalidConfig)?;
        let v = self.generation.nodes;
        if v < 2 {
            return Err(GenerateError::InvalidConfig(
                "nodes must be at least 2".into(),
            ));
        }
        let rates = profile.generation_rates(v);
        (0..self.networks)
            .into_par_iter()
            .map(|i| {
                let config = GenerationConfig {
                    node_count: v,
                    disk_radius: self.generation.disk_radius,
                    connectivity_radius: self.generation.connectivity_radius,
                    rng_seed: derive_seed(self.seed, i as u64),
                    max_retries: self.generation.max_retries,
                    channel_loss: self.channel_loss(),
                };
                generate_network(&config, &rates)
            })
            .collect()
    }

    /// Budgets evaluated on network `network_id`.
    pub fn budgets(&self, network_id: usize) -> Vec<ResourceBudget> {
        match self.random_budgets {
            Some(count) => {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(self.seed ^ 0xB0D6E7, network_id as u64));
                (0..count)
                    .map(|_| ResourceBudget {
                        mu_avg: log_uniform(&mut rng, self.mu_range),
                        cap_avg: log_uniform(&mut rng, self.cap_range),
                    })
                    .collect()
            }
            None => self
                .mu_grid
                .iter()
                .flat_map(|&mu_avg| {
                    self.cap_grid
                        .iter()
                        .map(move |&cap_avg| ResourceBudget { mu_avg, cap_avg })
                })
                .collect(),
        }
    }
}

fn log_uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
}

/// One CSV line of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub network_id: usize,
    pub scheme: Scheme,
    pub mu_avg: f64,
    pub cap_avg: f64,
    #[serde(rename = "analytic_PL")]
    pub analytic_pl: Option<f64>,
    #[serde(rename = "sim_PL")]
    pub sim_pl: Option<f64>,
    pub sim_ci: Option<f64>,
    /// `ok`, or the error that stopped this row.
    pub status: String,
}

/// Column names, in order. Changing them is a format break.
pub const SWEEP_COLUMNS: [&str; 8] = [
    "network_id",
    "scheme",
    "mu_avg",
    "cap_avg",
    "analytic_PL",
    "sim_PL",
    "sim_ci",
    "status",
];

/// Evaluates every (network, budget, scheme) combination. Work is spread over
/// the rayon pool; rows come back in (network, budget, scheme) order and are
/// identical for identical inputs. Failures are recorded in the row's status.
pub fn run_sweep(config: &ExperimentConfig, networks: &[NetworkTopology]) -> Vec<SweepRow> {
    let tasks: Vec<(usize, ResourceBudget)> = networks
        .iter()
        .enumerate()
        .flat_map(|(id, _)| config.budgets(id).into_iter().map(move |b| (id, b)))
        .collect();
    tasks
        .par_iter()
        .enumerate()
        .flat_map_iter(|(task, &(id, budget))| {
            config.schemes.iter().map(move |&scheme| {
                let seed = derive_seed(
                    config.seed,
                    (task * Scheme::ALL.len()) as u64 + scheme as u64,
                );
                evaluate(config, &networks[id], id, scheme, budget, seed)
            })
        })
        .collect()
}

fn evaluate(
    config: &ExperimentConfig,
    topology: &NetworkTopology,
    network_id: usize,
    scheme: Scheme,
    budget: ResourceBudget,
    seed: u64,
) -> SweepRow {
    let mut row = SweepRow {
        network_id,
        scheme,
        mu_avg: budget.mu_avg,
        cap_avg: budget.cap_avg,
        analytic_pl: None,
        sim_pl: None,
        sim_ci: None,
        status: "ok".into(),
    };
    let optimizer = OptimizerConfig {
        seed,
        ..config.optimizer.clone()
    };
    let allocation = match allocate(scheme, topology, &budget, &optimizer) {
        Ok(a) => a,
        Err(e) => {
            row.status = e.to_string();
            return row;
        }
    };
    match solve_flow(topology, &allocation) {
        Ok(flow) => row.analytic_pl = Some(flow.network_loss),
        Err(e) => {
            row.status = e.to_string();
            return row;
        }
    }
    if config.sim_events > 0 {
        match simulate(
            topology,
            &allocation,
            &SimConfig::new(config.sim_events, seed),
        ) {
            Ok(out) => {
                row.sim_pl = Some(out.empirical_loss);
                row.sim_ci = Some(out.ci_halfwidth);
            }
            Err(e) => row.status = e.to_string(),
        }
    }
    row
}
