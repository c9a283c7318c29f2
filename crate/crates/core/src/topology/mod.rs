//! Network topologies with (possibly fractional) routing towards a single sink.
//!
//! Nodes are indexed `0..node_count`; the last node is the sink. Routing is a
//! dense `V x V` matrix where `fraction(to, from)` is the share of `from`'s
//! outgoing traffic sent to `to`. Sensor columns sum to one, the sink column is
//! empty, and the support must be acyclic (equivalently `R^V = 0`).
//!
//! Human-facing output (violation messages, the JSON file format) uses 1-based
//! indices with `V` for the sink.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;

use thiserror::Error;

mod generate;
mod io;

pub use generate::{generate_network, GenerateError, GenerationConfig};
pub use io::{load_topology, save_topology, TopologyIoError, TOPOLOGY_FORMAT_VERSION};

/// Column sums of sensor columns must be within this of one.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("routing graph contains a cycle")]
pub struct CyclicRouting;

#[derive(Debug, Clone, PartialEq)]
pub struct Routing {
    size: usize,
    fractions: Vec<f64>,
}

impl Routing {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            fractions: vec![0.0; size * size],
        }
    }

    /// Deterministic routing: `next_hop[v]` receives all of `v`'s traffic.
    /// Nodes mapped to `None` (at least the sink) have no outgoing link.
    pub fn from_next_hops(next_hop: &[Option<usize>]) -> Self {
        let mut routing = Self::zeros(next_hop.len());
        for (from, to) in next_hop.iter().enumerate() {
            if let Some(to) = *to {
                routing.set(to, from, 1.0);
            }
        }
        routing
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn fraction(&self, to: usize, from: usize) -> f64 {
        self.fractions[to * self.size + from]
    }

    pub fn set(&mut self, to: usize, from: usize, fraction: f64) {
        self.fractions[to * self.size + from] = fraction;
    }

    /// Nodes that receive traffic from `from`, with their fractions.
    pub fn successors(&self, from: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.size)
            .map(move |to| (to, self.fraction(to, from)))
            .filter(|&(_, f)| f != 0.0)
    }

    /// Nodes that send traffic to `to`, with their fractions.
    pub fn predecessors(&self, to: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let row = &self.fractions[to * self.size..(to + 1) * self.size];
        row.iter()
            .enumerate()
            .filter(|&(_, &f)| f != 0.0)
            .map(|(from, &f)| (from, f))
    }

    /// Every nonzero entry as `(from, to, fraction)`, ordered by `from` then `to`.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.size).flat_map(move |from| self.successors(from).map(move |(to, f)| (from, to, f)))
    }

    pub fn link_count(&self) -> usize {
        self.fractions.iter().filter(|&&f| f != 0.0).count()
    }

    /// `out = R x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (to, slot) in out.iter_mut().enumerate() {
            *slot = self.fractions[to * self.size..(to + 1) * self.size]
                .iter()
                .zip(x)
                .map(|(r, xi)| r * xi)
                .sum();
        }
    }

    /// Kahn's algorithm over the support of the matrix. Ready nodes are taken
    /// smallest index first, so the order is deterministic.
    pub fn topological_order(&self) -> Result<Vec<usize>, CyclicRouting> {
        let mut indegree = vec![0usize; self.size];
        for (_, to, _) in self.links() {
            indegree[to] += 1;
        }
        let mut ready: BinaryHeap<Reverse<usize>> = indegree
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 0)
            .map(|(v, _)| Reverse(v))
            .collect();
        let mut order = Vec::with_capacity(self.size);
        while let Some(Reverse(v)) = ready.pop() {
            order.push(v);
            for (to, _) in self.successors(v) {
                indegree[to] -= 1;
                if indegree[to] == 0 {
                    ready.push(Reverse(to));
                }
            }
        }
        if order.len() == self.size {
            Ok(order)
        } else {
            Err(CyclicRouting)
        }
    }
}

/// A structural problem found by [`NetworkTopology::validate`]. Node indices
/// are stored 0-based and displayed 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewNodes(usize),
    DimensionMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    InvalidFraction {
        from: usize,
        to: usize,
        value: f64,
    },
    ColumnNotStochastic {
        node: usize,
        sum: f64,
    },
    SinkHasOutgoingLink {
        to: usize,
    },
    SelfLoop(usize),
    NotNilpotent,
    InvalidRate {
        node: usize,
        value: f64,
    },
    SinkGeneratesTraffic(f64),
    InvalidChannelLoss(f64),
    NonFinitePosition(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewNodes(n) => write!(f, "need at least 2 nodes, got {n}"),
            Violation::DimensionMismatch {
                field,
                expected,
                found,
            } => write!(f, "{field} has length {found}, expected {expected}"),
            Violation::InvalidFraction { from, to, value } => write!(
                f,
                "routing fraction {} -> {} is {value}, must lie in [0, 1]",
                from + 1,
                to + 1
            ),
            Violation::ColumnNotStochastic { node, sum } => write!(
                f,
                "outgoing fractions of sensor {} sum to {sum}, expected 1",
                node + 1
            ),
            Violation::SinkHasOutgoingLink { to } => {
                write!(f, "sink has an outgoing link to node {}", to + 1)
            }
            Violation::SelfLoop(v) => write!(f, "node {} routes to itself", v + 1),
            Violation::NotNilpotent => write!(f, "routing graph is cyclic (R^V != 0)"),
            Violation::InvalidRate { node, value } => {
                write!(f, "generation rate of node {} is {value}", node + 1)
            }
            Violation::SinkGeneratesTraffic(rate) => {
                write!(f, "sink generation rate must be 0, got {rate}")
            }
            Violation::InvalidChannelLoss(q) => {
                write!(f, "channel loss must lie in [0, 1), got {q}")
            }
            Violation::NonFinitePosition(v) => {
                write!(f, "position of node {} is not finite", v + 1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub node_count: usize,
    /// Planar coordinates in meters; the sink sits at the origin when generated.
    pub positions: Option<Vec<[f64; 2]>>,
    pub routing: Routing,
    /// Report generation rate per node, events/second. Zero for the sink.
    pub generation_rates: Vec<f64>,
    /// Per-transmission channel loss probability.
    pub channel_loss: f64,
}

impl NetworkTopology {
    pub fn sink(&self) -> usize {
        self.node_count - 1
    }

    pub fn sensor_count(&self) -> usize {
        self.node_count - 1
    }

    pub fn total_generation_rate(&self) -> f64 {
        self.generation_rates.iter().sum()
    }

    /// All structural problems, empty when the topology is usable.
    pub fn validate(&self) -> Vec<Violation> {
        let v = self.node_count;
        let mut out = Vec::new();
        if v < 2 {
            out.push(Violation::TooFewNodes(v));
        }
        if self.routing.size() != v {
            out.push(Violation::DimensionMismatch {
                field: "routing",
                expected: v,
                found: self.routing.size(),
            });
        }
        if self.generation_rates.len() != v {
            out.push(Violation::DimensionMismatch {
                field: "generation_rates",
                expected: v,
                found: self.generation_rates.len(),
            });
        }
        if let Some(positions) = &self.positions {
            if positions.len() != v {
                out.push(Violation::DimensionMismatch {
                    field: "positions",
                    expected: v,
                    found: positions.len(),
                });
            }
            for (i, p) in positions.iter().enumerate() {
                if !p[0].is_finite() || !p[1].is_finite() {
                    out.push(Violation::NonFinitePosition(i));
                }
            }
        }
        if !out.is_empty() {
            return out;
        }
        if !(0.0..1.0).contains(&self.channel_loss) {
            out.push(Violation::InvalidChannelLoss(self.channel_loss));
        }

        let sink = self.sink();
        for (node, &rate) in self.generation_rates.iter().enumerate() {
            if node == sink {
                if rate != 0.0 {
                    out.push(Violation::SinkGeneratesTraffic(rate));
                }
            } else if !(rate.is_finite() && rate >= 0.0) {
                out.push(Violation::InvalidRate { node, value: rate });
            }
        }

        for from in 0..v {
            let mut sum = 0.0;
            for to in 0..v {
                let f = self.routing.fraction(to, from);
                if f == 0.0 {
                    continue;
                }
                if !(f > 0.0 && f <= 1.0) {
                    out.push(Violation::InvalidFraction { from, to, value: f });
                }
                if from == sink {
                    out.push(Violation::SinkHasOutgoingLink { to });
                } else if from == to {
                    out.push(Violation::SelfLoop(from));
                }
                sum += f;
            }
            if from != sink && (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
                out.push(Violation::ColumnNotStochastic { node: from, sum });
            }
        }

        // Self-loops are reported on their own; only flag longer cycles here.
        let has_self_loop = out.iter().any(|x| matches!(x, Violation::SelfLoop(_)));
        if !has_self_loop && self.routing.topological_order().is_err() {
            out.push(Violation::NotNilpotent);
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    pub fn topological_order(&self) -> Result<Vec<usize>, CyclicRouting> {
        self.routing.topological_order()
    }

    /// Longest hop count from each node to the sink (0 for the sink, and for
    /// sensors with no route at all).
    pub fn hop_depths(&self) -> Result<Vec<usize>, CyclicRouting> {
        let order = self.topological_order()?;
        let mut depth = vec![0usize; self.node_count];
        for &v in order.iter().rev() {
            depth[v] = self
                .routing
                .successors(v)
                .map(|(to, _)| depth[to] + 1)
                .max()
                .unwrap_or(0);
        }
        Ok(depth)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Sensors `0 -> 1 -> ... -> V-1 (sink)`.
    pub fn chain(v: usize, rates: &[f64], q: f64) -> NetworkTopology {
        let next: Vec<Option<usize>> = (0..v).map(|i| (i + 1 < v).then_some(i + 1)).collect();
        let mut generation_rates = rates.to_vec();
        generation_rates.resize(v, 0.0);
        NetworkTopology {
            node_count: v,
            positions: None,
            routing: Routing::from_next_hops(&next),
            generation_rates,
            channel_loss: q,
        }
    }

    #[test]
    fn chain_is_valid() {
        let t = chain(3, &[1.0, 1.0], 0.0);
        assert_eq!(t.validate(), vec![]);
        assert_eq!(t.hop_depths().unwrap(), vec![2, 1, 0]);
    }

    #[test]
    fn self_loop_is_reported() {
        let mut t = chain(3, &[1.0, 1.0], 0.0);
        t.routing.set(1, 0, 0.0);
        t.routing.set(0, 0, 1.0);
        assert_eq!(t.validate(), vec![Violation::SelfLoop(0)]);
        assert_eq!(
            Violation::SelfLoop(0).to_string(),
            "node 1 routes to itself"
        );
    }

    #[test]
    fn two_cycle_is_not_nilpotent() {
        let mut t = chain(3, &[1.0, 1.0], 0.0);
        t.routing.set(2, 1, 0.0);
        t.routing.set(0, 1, 1.0);
        assert_eq!(t.validate(), vec![Violation::NotNilpotent]);
        assert!(t.topological_order().is_err());
    }

    #[test]
    fn sink_column_must_be_empty() {
        let mut t = chain(3, &[1.0, 1.0], 0.0);
        t.routing.set(0, 2, 1.0);
        let violations = t.validate();
        assert!(violations.contains(&Violation::SinkHasOutgoingLink { to: 0 }));
    }

    #[test]
    fn column_sums_and_rates() {
        let mut t = chain(3, &[1.0, -1.0], 1.5);
        t.routing.set(2, 0, 0.25);
        t.generation_rates[2] = 0.5;
        let violations = t.validate();
        assert!(violations.contains(&Violation::InvalidChannelLoss(1.5)));
        assert!(violations.contains(&Violation::SinkGeneratesTraffic(0.5)));
        assert!(violations.contains(&Violation::InvalidRate {
            node: 1,
            value: -1.0
        }));
        assert!(violations.contains(&Violation::ColumnNotStochastic { node: 0, sum: 1.25 }));
    }

    #[test]
    fn fractional_routing_topological_order() {
        let mut routing = Routing::zeros(4);
        routing.set(1, 0, 0.5);
        routing.set(2, 0, 0.5);
        routing.set(3, 1, 1.0);
        routing.set(1, 2, 1.0);
        assert_eq!(routing.topological_order().unwrap(), vec![0, 2, 1, 3]);
        let t = NetworkTopology {
            node_count: 4,
            positions: None,
            routing,
            generation_rates: vec![1.0, 1.0, 1.0, 0.0],
            channel_loss: 0.0,
        };
        assert!(t.is_valid());
        assert_eq!(t.hop_depths().unwrap(), vec![3, 1, 2, 0]);
    }
}
