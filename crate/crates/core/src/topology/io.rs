//! JSON topology files.
//!
//! ```json
//! { "version": 1, "node_count": 3, "channel_loss": 1e-5,
//!   "generation_rates": [0.1, 0.1, 0.0],
//!   "positions": [[10.0, 0.0], [5.0, 0.0], [0.0, 0.0]],
//!   "routing": [{"from": 1, "to": 2, "fraction": 1.0},
//!               {"from": 2, "to": 3, "fraction": 1.0}] }
//! ```
//!
//! Indices are 1-based and node `node_count` is the sink. `positions` may be
//! `null` or absent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{NetworkTopology, Routing, Violation};

pub const TOPOLOGY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TopologyIoError {
    #[error("malformed topology at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported topology format: {0}")]
    Schema(String),
    #[error("invalid topology: {}", join_violations(.0))]
    Validation(Vec<Violation>),
}

fn join_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyFile {
    version: u32,
    node_count: usize,
    channel_loss: f64,
    generation_rates: Vec<f64>,
    #[serde(default)]
    positions: Option<Vec<[f64; 2]>>,
    routing: Vec<LinkEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkEntry {
    from: usize,
    to: usize,
    fraction: f64,
}

/// Serializes a valid topology as pretty-printed UTF-8 JSON.
pub fn save_topology(t: &NetworkTopology) -> Result<String, TopologyIoError> {
    let violations = t.validate();
    if !violations.is_empty() {
        return Err(TopologyIoError::Validation(violations));
    }
    let file = TopologyFile {
        version: TOPOLOGY_FORMAT_VERSION,
        node_count: t.node_count,
        channel_loss: t.channel_loss,
        generation_rates: t.generation_rates.clone(),
        positions: t.positions.clone(),
        routing: t
            .routing
            .links()
            .map(|(from, to, fraction)| LinkEntry {
                from: from + 1,
                to: to + 1,
                fraction,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("topology is always serializable");
    text.push('\n');
    Ok(text)
}

pub fn load_topology(bytes: &[u8]) -> Result<NetworkTopology, TopologyIoError> {
    let file: TopologyFile = serde_json::from_slice(bytes).map_err(|e| TopologyIoError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if file.version != TOPOLOGY_FORMAT_VERSION {
        return Err(TopologyIoError::Schema(format!(
            "version {} (expected {TOPOLOGY_FORMAT_VERSION})",
            file.version
        )));
    }
    let v = file.node_count;
    let mut routing = Routing::zeros(v);
    for link in &file.routing {
        let in_range = |i: usize| (1..=v).contains(&i);
        if !in_range(link.from) || !in_range(link.to) {
            return Err(TopologyIoError::Schema(format!(
                "link {} -> {} references a node outside 1..={v}",
                link.from, link.to
            )));
        }
        if routing.fraction(link.to - 1, link.from - 1) != 0.0 {
            return Err(TopologyIoError::Schema(format!(
                "duplicate link {} -> {}",
                link.from, link.to
            )));
        }
        routing.set(link.to - 1, link.from - 1, link.fraction);
    }
    let topology = NetworkTopology {
        node_count: v,
        positions: file.positions,
        routing,
        generation_rates: file.generation_rates,
        channel_loss: file.channel_loss,
    };
    let violations = topology.validate();
    if violations.is_empty() {
        Ok(topology)
    } else {
        Err(TopologyIoError::Validation(violations))
    }
}
