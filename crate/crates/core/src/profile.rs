//! Typical node parameters.
//!
//! The `micaz-solar` profile describes a ZigBee mote on a small solar cell
//! with a supercapacitor store: one report costs about 4.73 mJ, a 3 mWh store
//! holds 2283 such packets, 1.1 mW of harvest yields 0.2326 packets/s, and the
//! network as a whole generates 0.4652 reports/s split evenly over `V` nodes.

use rand::Rng;

use crate::allocation::{HarvestingAllocation, ResourceBudget};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterProfile {
    pub name: &'static str,
    /// Network-wide report rate; each sensor gets `total / V`.
    pub total_event_rate: f64,
    /// Per-sensor harvest rate, packets/s.
    pub harvest_rate: f64,
    /// Per-sensor storage, packets.
    pub capacity: f64,
    pub channel_loss: f64,
}

pub const MICAZ_SOLAR: ParameterProfile = ParameterProfile {
    name: "micaz-solar",
    total_event_rate: 0.4652,
    harvest_rate: 0.2326,
    capacity: 2283.0,
    channel_loss: 1e-5,
};

pub const PROFILES: &[ParameterProfile] = &[MICAZ_SOLAR];

impl ParameterProfile {
    pub fn by_name(name: &str) -> Option<Self> {
        PROFILES.iter().copied().find(|p| p.name == name)
    }

    pub fn event_rate(&self, node_count: usize) -> f64 {
        self.total_event_rate / node_count as f64
    }

    /// Equal rates on every sensor, zero at the sink.
    pub fn generation_rates(&self, node_count: usize) -> Vec<f64> {
        let mut rates = vec![self.event_rate(node_count); node_count];
        rates[node_count - 1] = 0.0;
        rates
    }

    pub fn budget(&self) -> ResourceBudget {
        ResourceBudget {
            mu_avg: self.harvest_rate,
            cap_avg: self.capacity,
        }
    }

    /// Each sensor's rate, harvest rate and capacity independently scaled by
    /// a factor uniform in `[1 - spread, 1 + spread]`. Capacities are rounded
    /// so the analysis and the simulator see the same store size.
    pub fn jittered(
        &self,
        node_count: usize,
        spread: f64,
        rng: &mut impl Rng,
    ) -> (Vec<f64>, HarvestingAllocation) {
        let sensors = node_count - 1;
        let mut factor = || 1.0 + spread * (2.0 * rng.random::<f64>() - 1.0);
        let mut rates = Vec::with_capacity(node_count);
        let mut mu = Vec::with_capacity(sensors);
        let mut cap = Vec::with_capacity(sensors);
        for _ in 0..sensors {
            rates.push(self.event_rate(node_count) * factor());
            mu.push(self.harvest_rate * factor());
            cap.push((self.capacity * factor()).round().max(1.0));
        }
        rates.push(0.0);
        (rates, HarvestingAllocation { mu, cap })
    }
}
