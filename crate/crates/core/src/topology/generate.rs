use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{NetworkTopology, Routing};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerateError {
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} generation rates (sink last, zero), got {found:?}")]
    InvalidRates { expected: usize, found: Vec<f64> },
    #[error("no connected deployment found in {attempts} attempts")]
    DisconnectedNetwork { attempts: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub node_count: usize,
    pub disk_radius: f64,
    /// Two nodes are linked iff their distance is strictly below this.
    pub connectivity_radius: f64,
    pub rng_seed: u64,
    pub max_retries: usize,
    /// Copied into the generated topology.
    pub channel_loss: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            node_count: 20,
            disk_radius: 100.0,
            connectivity_radius: 40.0,
            rng_seed: 0,
            max_retries: 1000,
            channel_loss: 1e-5,
        }
    }
}

impl GenerationConfig {
    fn check(&self) -> Result<(), GenerateError> {
        let bad = |msg: &str| Err(GenerateError::InvalidConfig(msg.to_owned()));
        if self.node_count < 2 {
            return bad("node_count must be at least 2");
        }
        if !(self.disk_radius.is_finite() && self.disk_radius > 0.0) {
            return bad("disk_radius must be positive");
        }
        if !(self.connectivity_radius.is_finite() && self.connectivity_radius > 0.0) {
            return bad("connectivity_radius must be positive");
        }
        if self.max_retries < 1 {
            return bad("max_retries must be at least 1");
        }
        if !(0.0..1.0).contains(&self.channel_loss) {
            return bad("channel_loss must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Deploys `V - 1` sensors uniformly on a disk with the sink at its center,
/// links nodes closer than the connectivity radius and routes every sensor
/// along its Dijkstra shortest path to the sink, with link cost equal to the
/// squared distance. Deployments that leave a sensor cut off from the sink are
/// discarded and redrawn from the same RNG stream.
pub fn generate_network(
    config: &GenerationConfig,
    rates: &[f64],
) -> Result<NetworkTopology, GenerateError> {
    config.check()?;
    let v = config.node_count;
    let rates_ok =
        rates.len() == v && rates[v - 1] == 0.0 && rates.iter().all(|r| r.is_finite() && *r >= 0.0);
    if !rates_ok {
        return Err(GenerateError::InvalidRates {
            expected: v,
            found: rates.to_vec(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    for _ in 0..config.max_retries {
        let positions = deploy_on_disk(&mut rng, v, config.disk_radius);
        if let Some(next_hop) = route_to_sink(&positions, config.connectivity_radius) {
            return Ok(NetworkTopology {
                node_count: v,
                positions: Some(positions),
                routing: Routing::from_next_hops(&next_hop),
                generation_rates: rates.to_vec(),
                channel_loss: config.channel_loss,
            });
        }
    }
    Err(GenerateError::DisconnectedNetwork {
        attempts: config.max_retries,
    })
}

fn deploy_on_disk(rng: &mut impl Rng, v: usize, radius: f64) -> Vec<[f64; 2]> {
    let mut positions: Vec<[f64; 2]> = (0..v - 1)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let phi = std::f64::consts::TAU * rng.random::<f64>();
            [r * phi.cos(), r * phi.sin()]
        })
        .collect();
    positions.push([0.0, 0.0]);
    positions
}

fn squared_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

#[derive(PartialEq)]
struct Frontier {
    cost: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on cost, then on node index.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Next hop of every node on a shortest squared-distance path to the sink
/// (last position), or `None` if some sensor cannot reach it. Among equally
/// short paths the smallest next-hop index wins.
pub(crate) fn route_to_sink(positions: &[[f64; 2]], radius: f64) -> Option<Vec<Option<usize>>> {
    let v = positions.len();
    let sink = v - 1;
    let limit = radius * radius;
    let neighbours: Vec<Vec<(usize, f64)>> = (0..v)
        .map(|a| {
            (0..v)
                .filter(|&b| b != a)
                .map(|b| (b, squared_distance(positions[a], positions[b])))
                .filter(|&(_, d2)| d2 < limit)
                .collect()
        })
        .collect();

    let mut dist = vec![f64::INFINITY; v];
    dist[sink] = 0.0;
    let mut heap = BinaryHeap::from([Frontier {
        cost: 0.0,
        node: sink,
    }]);
    while let Some(Frontier { cost, node }) = heap.pop() {
        if cost > dist[node] {
            continue;
        }
        for &(next, w) in &neighbours[node] {
            let candidate = cost + w;
            if candidate < dist[next] {
                dist[next] = candidate;
                heap.push(Frontier {
                    cost: candidate,
                    node: next,
                });
            }
        }
    }
    if dist.iter().any(|d| d.is_infinite()) {
        return None;
    }

    let next_hop = (0..v)
        .map(|node| {
            if node == sink {
                return None;
            }
            // Neighbour lists are in index order, so the first tight edge is
            // the smallest index. Strictly smaller distance keeps it acyclic.
            neighbours[node]
                .iter()
                .find(|&&(u, w)| dist[u] < dist[node] && dist[u] + w == dist[node])
                .map(|&(u, _)| u)
        })
        .collect::<Vec<_>>();
    debug_assert!(next_hop[..sink].iter().all(Option::is_some));
    Some(next_hop)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates(v: usize) -> Vec<f64> {
        let mut r = vec![0.4652 / v as f64; v];
        r[v - 1] = 0.0;
        r
    }

    #[test]
    fn two_nodes_single_edge() {
        let config = GenerationConfig {
            node_count: 2,
            connectivity_radius: 200.0,
            ..Default::default()
        };
        let t = generate_network(&config, &rates(2)).unwrap();
        assert_eq!(t.routing.fraction(1, 0), 1.0);
        assert_eq!(t.routing.link_count(), 1);
        assert_eq!(t.positions.as_ref().unwrap()[1], [0.0, 0.0]);
    }

    #[test]
    fn deterministic_for_seed() {
        let config = GenerationConfig {
            rng_seed: 42,
            ..Default::default()
        };
        let a = generate_network(&config, &rates(20)).unwrap();
        let b = generate_network(&config, &rates(20)).unwrap();
        assert_eq!(a, b);
        let other = generate_network(
            &GenerationConfig {
                rng_seed: 43,
                ..config
            },
            &rates(20),
        )
        .unwrap();
        assert_ne!(a.positions, other.positions);
    }

    #[test]
    fn generated_topologies_are_valid() {
        for seed in 0..30 {
            let config = GenerationConfig {
                node_count: 10 + seed as usize * 3,
                rng_seed: seed,
                ..Default::default()
            };
            let t = generate_network(&config, &rates(config.node_count)).unwrap();
            assert_eq!(t.validate(), vec![], "seed {seed}");
            for from in 0..t.sink() {
                assert_eq!(t.routing.successors(from).count(), 1);
            }
        }
    }

    #[test]
    fn disconnected_after_retries() {
        let config = GenerationConfig {
            node_count: 2,
            connectivity_radius: 1e-9,
            max_retries: 5,
            ..Default::default()
        };
        assert_eq!(
            generate_network(&config, &rates(2)),
            Err(GenerateError::DisconnectedNetwork { attempts: 5 })
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let config = GenerationConfig::default();
        assert!(matches!(
            generate_network(&config, &rates(5)),
            Err(GenerateError::InvalidRates { .. })
        ));
        let mut r = rates(20);
        r[19] = 0.1;
        assert!(generate_network(&config, &r).is_err());
        let config = GenerationConfig {
            max_retries: 0,
            ..Default::default()
        };
        assert!(matches!(
            generate_network(&config, &rates(20)),
            Err(GenerateError::InvalidConfig(_))
        ));
    }

    #[test]
    fn equal_cost_ties_pick_smallest_index() {
        // Sensors 0 and 1 are mirror images relative to sensor 2, and both
        // are one hop from the sink; sensor 2 must pick 0.
        let positions = vec![[1.0, 1.0], [1.0, -1.0], [2.0, 0.0], [0.0, 0.0]];
        let next = route_to_sink(&positions, 1.5).unwrap();
        assert_eq!(next, vec![Some(3), Some(3), Some(0), None]);
    }
}
