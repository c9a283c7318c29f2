//! Python module `ehwsn`.
//!
//! Node indices are 0-based here, with the sink last. Topology JSON keeps its
//! own 1-based convention. Long computations release the GIL.

use ehwsn_core::allocation::{allocate as allocate_scheme, OptimizerConfig, Scheme};
use ehwsn_core::profile::ParameterProfile;
use ehwsn_core::queueing::try_blocking_probability;
use ehwsn_core::{
    generate_network, load_topology, save_topology, simulate as run_simulation,
    solve_flow as run_flow, theta_equal_loss as run_theta, GenerationConfig, HarvestingAllocation,
    NetworkTopology, ResourceBudget, Routing, SimConfig,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_error(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn profile(name: &str) -> PyResult<ParameterProfile> {
    ParameterProfile::by_name(name).ok_or_else(|| value_error(format!("unknown profile {name:?}")))
}

/// Network topology: routing matrix, per-node report rates and channel loss.
#[pyclass(name = "Topology", module = "ehwsn", frozen)]
struct PyTopology {
    inner: NetworkTopology,
}

#[pymethods]
impl PyTopology {
    /// Builds a topology from `(from, to, fraction)` links. Not validated;
    /// call `validate()`.
    #[new]
    #[pyo3(signature = (generation_rates, links, channel_loss = 0.0))]
    fn new(
        generation_rates: Vec<f64>,
        links: Vec<(usize, usize, f64)>,
        channel_loss: f64,
    ) -> PyResult<Self> {
        let v = generation_rates.len();
        let mut routing = Routing::zeros(v);
        for (from, to, fraction) in links {
            if from >= v || to >= v {
                return Err(value_error(format!(
                    "link {from} -> {to} out of range for {v} nodes"
                )));
            }
            routing.set(to, from, fraction);
        }
        Ok(Self {
            inner: NetworkTopology {
                node_count: v,
                positions: None,
                routing,
                generation_rates,
                channel_loss,
            },
        })
    }

    /// Random disk deployment with shortest-path routing to a central sink.
    #[staticmethod]
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (nodes, seed = 0, disk_radius = 100.0, connectivity_radius = 40.0,
                        max_retries = 1000, channel_loss = None, profile_name = "micaz-solar"))]
    fn generate(
        py: Python<'_>,
        nodes: usize,
        seed: u64,
        disk_radius: f64,
        connectivity_radius: f64,
        max_retries: usize,
        channel_loss: Option<f64>,
        profile_name: &str,
    ) -> PyResult<Self> {
        let p = profile(profile_name)?;
        if nodes < 2 {
            return Err(value_error("nodes must be at least 2"));
        }
        let config = GenerationConfig {
            node_count: nodes,
            disk_radius,
            connectivity_radius,
            rng_seed: seed,
            max_retries,
            channel_loss: channel_loss.unwrap_or(p.channel_loss),
        };
        let rates = p.generation_rates(nodes);
        let inner = py
            .detach(|| generate_network(&config, &rates))
            .map_err(value_error)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: load_topology(text.as_bytes()).map_err(value_error)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        save_topology(&self.inner).map_err(value_error)
    }

    /// Human-readable violations; empty when valid.
    fn validate(&self) -> Vec<String> {
        self.inner
            .validate()
            .iter()
            .map(ToString::to_string)
            .collect()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count
    }

    #[getter]
    fn sink(&self) -> usize {
        self.inner.sink()
    }

    #[getter]
    fn generation_rates(&self) -> Vec<f64> {
        self.inner.generation_rates.clone()
    }

    #[getter]
    fn channel_loss(&self) -> f64 {
        self.inner.channel_loss
    }

    #[getter]
    fn positions(&self) -> Option<Vec<[f64; 2]>> {
        self.inner.positions.clone()
    }

    /// `(from, to, fraction)` for every nonzero routing entry.
    #[getter]
    fn links(&self) -> Vec<(usize, usize, f64)> {
        self.inner.routing.links().collect()
    }

    fn hop_depths(&self) -> PyResult<Vec<usize>> {
        self.inner.hop_depths().map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!(
            "Topology(node_count={}, links={}, channel_loss={})",
            self.inner.node_count,
            self.inner.routing.link_count(),
            self.inner.channel_loss
        )
    }
}

/// Probability that an M|M|1|N energy queue with ratio `alpha` is empty.
#[pyfunction]
fn blocking_probability(alpha: f64, capacity: f64) -> PyResult<f64> {
    try_blocking_probability(alpha, capacity).map_err(value_error)
}

/// Arrival rates, node losses and network loss for one allocation.
#[pyfunction]
fn solve_flow<'py>(
    py: Python<'py>,
    topology: &PyTopology,
    mu: Vec<f64>,
    cap: Vec<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let flow = run_flow(&topology.inner, &HarvestingAllocation { mu, cap }).map_err(value_error)?;
    let out = PyDict::new(py);
    out.set_item("theta", flow.theta)?;
    out.set_item("node_loss", flow.node_loss)?;
    out.set_item("network_loss", flow.network_loss)?;
    Ok(out)
}

/// Arrival rates when every sensor loses a fraction `p` of its traffic.
#[pyfunction]
fn theta_equal_loss(topology: &PyTopology, p: f64) -> PyResult<Vec<f64>> {
    run_theta(&topology.inner, p).map_err(value_error)
}

/// Runs `scheme` (`uniform`, `fair` or `optimal`) and returns `(mu, cap)`.
#[pyfunction]
#[pyo3(signature = (topology, scheme, mu_avg, cap_avg, seed = 0, iterations = 20_000, restarts = 1))]
#[allow(clippy::too_many_arguments)]
fn allocate(
    py: Python<'_>,
    topology: &PyTopology,
    scheme: &str,
    mu_avg: f64,
    cap_avg: f64,
    seed: u64,
    iterations: usize,
    restarts: usize,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let scheme: Scheme = scheme.parse().map_err(value_error)?;
    let budget = ResourceBudget::new(mu_avg, cap_avg).map_err(value_error)?;
    let config = OptimizerConfig {
        seed,
        iterations,
        restarts,
        ..OptimizerConfig::default()
    };
    let t = &topology.inner;
    let a = py
        .detach(|| allocate_scheme(scheme, t, &budget, &config))
        .map_err(value_error)?;
    Ok((a.mu, a.cap))
}

/// Discrete-event simulation; capacities are rounded to whole packets.
#[pyfunction]
#[pyo3(signature = (topology, mu, cap, events = 1_000_000, seed = 0, warmup = None))]
fn simulate<'py>(
    py: Python<'py>,
    topology: &PyTopology,
    mu: Vec<f64>,
    cap: Vec<f64>,
    events: u64,
    seed: u64,
    warmup: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    if events == 0 {
        return Err(value_error("events must be at least 1"));
    }
    let mut config = SimConfig::new(events, seed);
    if let Some(w) = warmup {
        config.warmup_events = w;
    }
    let t = &topology.inner;
    let alloc = HarvestingAllocation { mu, cap };
    let out = py
        .detach(|| run_simulation(t, &alloc, &config))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    d.set_item("generated", out.generated)?;
    d.set_item("delivered", out.delivered)?;
    d.set_item("lost_energy", out.lost_energy.clone())?;
    d.set_item("lost_channel", out.lost_channel)?;
    d.set_item("empirical_loss", out.empirical_loss)?;
    d.set_item("ci_halfwidth", out.ci_halfwidth)?;
    d.set_item("simulated_time", out.simulated_time)?;
    Ok(d)
}

#[pymodule]
fn ehwsn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTopology>()?;
    m.add_function(wrap_pyfunction!(blocking_probability, m)?)?;
    m.add_function(wrap_pyfunction!(solve_flow, m)?)?;
    m.add_function(wrap_pyfunction!(theta_equal_loss, m)?)?;
    m.add_function(wrap_pyfunction!(allocate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
