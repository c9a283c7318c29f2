//! Discrete-event Monte Carlo simulation of the network.
//!
//! Every sensor generates reports as a Poisson process of rate `lambda_v` and
//! harvests energy packets as an independent Poisson process of rate `mu_v`
//! into a store of at most `N_v` packets. A report reaching a sensor with an
//! empty store is lost; otherwise it consumes one packet, survives the channel
//! with probability `1 - q`, and is forwarded at once to a next hop drawn from
//! the routing column. Reports reaching the sink are delivered.
//!
//! Generation events are driven by a priority queue. Harvesting is advanced
//! lazily: between two visits to a node nothing is consumed there, so the
//! packets gained over a gap of length `dt` are `min(N - e, Poisson(mu dt))`.
//! This is the same process as scheduling every packet, at a fraction of the
//! cost when harvest events vastly outnumber reports.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::HarvestingAllocation;
use crate::topology::{CyclicRouting, NetworkTopology};

/// Number of batches used for the batch-means confidence interval.
pub const CI_BATCHES: usize = 40;
const Z_95: f64 = 1.959_963_984_540_054;
/// Above this mean a harvest gap simply refills the store.
const POISSON_SATURATION: f64 = 1e15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    CyclicRouting(#[from] CyclicRouting),
    #[error("allocation covers {found} sensors, topology has {expected}")]
    AllocationMismatch { expected: usize, found: usize },
    #[error("capacity of sensor {node} rounds to {value}, must be at least 1")]
    InvalidCapacity { node: usize, value: f64 },
    #[error("harvest rate of sensor {node} is {value}")]
    InvalidHarvestRate { node: usize, value: f64 },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("total generation rate is zero")]
    NoTraffic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Reports counted after warmup; the run stops once this many are in.
    pub min_generated_events: u64,
    /// Reports generated (and discarded) before counting starts.
    pub warmup_events: u64,
    pub rng_seed: u64,
}

impl SimConfig {
    /// Warmup defaults to a tenth of the counted events.
    pub fn new(min_generated_events: u64, rng_seed: u64) -> Self {
        Self {
            min_generated_events,
            warmup_events: min_generated_events / 10,
            rng_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub generated: u64,
    pub delivered: u64,
    /// Reports dropped for lack of energy, per sensor.
    pub lost_energy: Vec<u64>,
    pub lost_channel: u64,
    pub empirical_loss: f64,
    /// 95% half-width on `empirical_loss` (batch means when enough reports).
    pub ci_halfwidth: f64,
    /// Simulated clock at the end of the run, seconds.
    pub simulated_time: f64,
}

impl SimOutcome {
    pub fn total_lost(&self) -> u64 {
        self.lost_energy.iter().sum::<u64>() + self.lost_channel
    }
}

#[derive(PartialEq)]
struct Arrival {
    time: f64,
    node: usize,
}

impl Eq for Arrival {}

impl Ord for Arrival {
    fn cmp(&self, other: &Self) -> Ordering {
        // Earliest first, ties by node index.
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Arrival {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct EnergyStore {
    rate: f64,
    capacity: u64,
    level: u64,
    updated: f64,
}

impl EnergyStore {
    fn advance(&mut self, now: f64, rng: &mut impl Rng) {
        let gap = now - self.updated;
        self.updated = now;
        let room = self.capacity - self.level;
        if room == 0 || self.rate == 0.0 || gap <= 0.0 {
            return;
        }
        let mean = self.rate * gap;
        let gained = if mean > POISSON_SATURATION {
            room
        } else {
            let draw: f64 = Poisson::new(mean)
                .expect("positive finite mean")
                .sample(rng);
            (draw as u64).min(room)
        };
        self.level += gained;
    }
}

/// Where a report leaving a sensor goes next.
enum NextHop {
    Fixed(usize),
    /// Cumulative fractions paired with targets.
    Split(Vec<(f64, usize)>),
}

/// Runs one simulation; deterministic for a fixed `config.rng_seed`.
pub fn simulate(
    topology: &NetworkTopology,
    allocation: &HarvestingAllocation,
    config: &SimConfig,
) -> Result<SimOutcome, SimError> {
    if config.min_generated_events < 1 {
        return Err(SimError::InvalidConfig(
            "min_generated_events must be at least 1".into(),
        ));
    }
    topology.topological_order()?;
    let sensors = topology.sensor_count();
    let sink = topology.sink();
    if allocation.mu.len() != sensors || allocation.cap.len() != sensors {
        return Err(SimError::AllocationMismatch {
            expected: sensors,
            found: allocation.mu.len().min(allocation.cap.len()),
        });
    }
    if !(topology.total_generation_rate() > 0.0) {
        return Err(SimError::NoTraffic);
    }

    let mut stores = Vec::with_capacity(sensors);
    for node in 0..sensors {
        let rate = allocation.mu[node];
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(SimError::InvalidHarvestRate { node, value: rate });
        }
        let rounded = allocation.cap[node].round();
        if !(rounded.is_finite() && rounded >= 1.0) {
            return Err(SimError::InvalidCapacity {
                node,
                value: rounded,
            });
        }
        stores.push(EnergyStore {
            rate,
            capacity: rounded as u64,
            level: rounded as u64,
            updated: 0.0,
        });
    }
    let next_hops: Vec<NextHop> = (0..sensors)
        .map(|node| {
            let succ: Vec<(usize, f64)> = topology.routing.successors(node).collect();
            match succ.as_slice() {
                [(to, _)] => NextHop::Fixed(*to),
                _ => {
                    let mut acc = 0.0;
                    NextHop::Split(
                        succ.iter()
                            .map(|&(to, f)| {
                                acc += f;
                                (acc, to)
                            })
                            .collect(),
                    )
                }
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let generators: Vec<Option<Exp<f64>>> = topology.generation_rates[..sensors]
        .iter()
        .map(|&rate| (rate > 0.0).then(|| Exp::new(rate).expect("positive rate")))
        .collect();
    let mut queue = BinaryHeap::new();
    for (node, gen) in generators.iter().enumerate() {
        if let Some(gen) = gen {
            queue.push(Arrival {
                time: gen.sample(&mut rng),
                node,
            });
        }
    }

    let q = topology.channel_loss;
    let target = config.min_generated_events;
    let mut warmup_left = config.warmup_events;
    let mut counted = 0u64;
    let mut delivered = 0u64;
    let mut lost_energy = vec![0u64; sensors];
    let mut lost_channel = 0u64;
    let mut batch_lost = vec![0u64; CI_BATCHES];
    let mut now = 0.0;

    while counted < target {
        let Arrival { time, node: source } = queue.pop().expect("at least one generator");
        now = time;
        let gen = generators[source]
            .as_ref()
            .expect("only generators are queued");
        queue.push(Arrival {
            time: time + gen.sample(&mut rng),
            node: source,
        });

        let counting = warmup_left == 0;
        if !counting {
            warmup_left -= 1;
        }
        let mut node = source;
        let fate = loop {
            if node == sink {
                break Fate::Delivered;
            }
            let store = &mut stores[node];
            store.advance(now, &mut rng);
            if store.level == 0 {
                break Fate::NoEnergy(node);
            }
            store.level -= 1;
            if q > 0.0 && rng.random::<f64>() < q {
                break Fate::Channel;
            }
            node = match &next_hops[node] {
                NextHop::Fixed(to) => *to,
                NextHop::Split(cumulative) => {
                    let u = rng.random::<f64>() * cumulative.last().map_or(1.0, |c| c.0);
                    cumulative
                        .iter()
                        .find(|(c, _)| u < *c)
                        .or(cumulative.last())
                        .map(|&(_, to)| to)
                        .expect("sensor has a next hop")
                }
            };
        };
        if !counting {
            continue;
        }
        let batch = (counted as u128 * CI_BATCHES as u128 / target as u128) as usize;
        counted += 1;
        match fate {
            Fate::Delivered => delivered += 1,
            Fate::NoEnergy(v) => {
                lost_energy[v] += 1;
                batch_lost[batch] += 1;
            }
            Fate::Channel => {
                lost_channel += 1;
                batch_lost[batch] += 1;
            }
        }
    }

    let empirical_loss = 1.0 - delivered as f64 / counted as f64;
    Ok(SimOutcome {
        generated: counted,
        delivered,
        lost_energy,
        lost_channel,
        empirical_loss,
        ci_halfwidth: confidence_halfwidth(&batch_lost, counted, empirical_loss),
        simulated_time: now,
    })
}

enum Fate {
    Delivered,
    NoEnergy(usize),
    Channel,
}

/// Batch means over [`CI_BATCHES`] consecutive batches, which accounts for
/// the correlation between reports that see the same energy stores. Runs too
/// short for that fall back to the binomial normal approximation.
fn confidence_halfwidth(batch_lost: &[u64], counted: u64, loss: f64) -> f64 {
    let batches = batch_lost.len() as u64;
    if counted < 10 * batches {
        return Z_95 * (loss * (1.0 - loss) / counted as f64).sqrt();
    }
    let fractions: Vec<f64> = batch_lost
        .iter()
        .enumerate()
        .map(|(b, &lost)| {
            let b = b as u64;
            // Batch b holds indices i with floor(i B / total) = b.
            let start = (b * counted).div_ceil(batches);
            let end = ((b + 1) * counted).div_ceil(batches);
            lost as f64 / (end - start) as f64
        })
        .collect();
    let n = fractions.len() as f64;
    let mean = fractions.iter().sum::<f64>() / n;
    let var = fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Z_95 * (var / n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queueing::try_blocking_probability;
    use crate::topology::tests::chain;
    use crate::topology::Routing;

    fn alloc(mu: &[f64], cap: &[f64]) -> HarvestingAllocation {
        HarvestingAllocation {
            mu: mu.to_vec(),
            cap: cap.to_vec(),
        }
    }

    #[test]
    fn abundant_energy_no_channel_loss() {
        let t = chain(4, &[0.2, 0.1, 0.3], 0.0);
        let out = simulate(&t, &alloc(&[1e9; 3], &[5.0; 3]), &SimConfig::new(20_000, 1)).unwrap();
        assert_eq!(out.empirical_loss, 0.0);
        assert_eq!(out.delivered, 20_000);
        assert_eq!(out.ci_halfwidth, 0.0);
    }

    #[test]
    fn conservation_and_determinism() {
        let t = chain(4, &[0.2, 0.1, 0.3], 0.05);
        let a = alloc(&[0.3, 0.5, 0.4], &[2.0, 3.0, 1.4]);
        let config = SimConfig::new(50_000, 17);
        let out = simulate(&t, &a, &config).unwrap();
        assert_eq!(out.generated, out.delivered + out.total_lost());
        assert_eq!(out.generated, 50_000);
        assert_eq!(out, simulate(&t, &a, &config).unwrap());
        let other = simulate(&t, &a, &SimConfig::new(50_000, 18)).unwrap();
        assert_ne!(out.delivered, other.delivered);
    }

    #[test]
    fn isolated_queue_matches_blocking_probability() {
        for alpha in [0.5, 1.0, 2.0] {
            for n in [1.0, 5.0, 20.0] {
                let t = chain(2, &[1.0], 0.0);
                let out =
                    simulate(&t, &alloc(&[alpha], &[n]), &SimConfig::new(400_000, 3)).unwrap();
                let p = try_blocking_probability(alpha, n).unwrap();
                // With p ~ 5e-7 a run usually sees no loss at all and the
                // empirical interval collapses; floor it at the binomial one.
                let binomial = Z_95 * (p * (1.0 - p) / out.generated as f64).sqrt();
                let tol = 3.0 * out.ci_halfwidth.max(binomial);
                assert!(
                    (out.empirical_loss - p).abs() <= tol,
                    "alpha={alpha} n={n} sim={} p={p} ci={}",
                    out.empirical_loss,
                    out.ci_halfwidth
                );
            }
        }
    }

    #[test]
    fn fractional_routing_splits_traffic() {
        let mut routing = Routing::zeros(4);
        routing.set(1, 0, 0.25);
        routing.set(2, 0, 0.75);
        routing.set(3, 1, 1.0);
        routing.set(3, 2, 1.0);
        let t = NetworkTopology {
            node_count: 4,
            positions: None,
            routing,
            generation_rates: vec![1.0, 0.0, 0.0, 0.0],
            channel_loss: 0.0,
        };
        // Nodes 1 and 2 have no harvest: everything reaching them dies there.
        let out = simulate(
            &t,
            &alloc(&[1e9, 0.0, 0.0], &[5.0, 5.0, 5.0]),
            &SimConfig::new(100_000, 5),
        )
        .unwrap();
        assert_eq!(out.delivered, 0);
        let share = out.lost_energy[1] as f64 / out.generated as f64;
        assert!((share - 0.25).abs() < 0.01, "{share}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let t = chain(3, &[1.0, 1.0], 0.0);
        let config = SimConfig::new(10, 0);
        assert!(matches!(
            simulate(&t, &alloc(&[1.0, 1.0], &[1.0, 0.4]), &config),
            Err(SimError::InvalidCapacity { node: 1, .. })
        ));
        assert!(matches!(
            simulate(&t, &alloc(&[1.0], &[1.0]), &config),
            Err(SimError::AllocationMismatch { .. })
        ));
        assert!(simulate(&t, &alloc(&[1.0, 1.0], &[1.0, 1.0]), &SimConfig::new(0, 0)).is_err());
        let silent = chain(3, &[0.0, 0.0], 0.0);
        assert_eq!(
            simulate(&silent, &alloc(&[1.0, 1.0], &[1.0, 1.0]), &config),
            Err(SimError::NoTraffic)
        );
    }
}
