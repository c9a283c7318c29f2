#![allow(dead_code)]

use ehwsn_core::{NetworkTopology, Routing};
use nalgebra::{DMatrix, DVector};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random acyclic fractional routing: nodes are shuffled into a hidden order
/// and every sensor splits its traffic over 1-3 nodes later in that order
/// (the sink is always last).
pub fn random_dag(v: usize, seed: u64, q: f64) -> NetworkTopology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sink = v - 1;
    let mut order: Vec<usize> = (0..sink).collect();
    order.shuffle(&mut rng);
    order.push(sink);
    let mut routing = Routing::zeros(v);
    for (pos, &from) in order.iter().enumerate().take(v - 1) {
        let later = &order[pos + 1..];
        let fanout = rng.random_range(1..=3usize).min(later.len());
        let targets: Vec<usize> = later.choose_multiple(&mut rng, fanout).copied().collect();
        let weights: Vec<f64> = targets.iter().map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for (&to, w) in targets.iter().zip(&weights) {
            routing.set(to, from, w / total);
        }
    }
    let mut rates: Vec<f64> = (0..v).map(|_| rng.random_range(0.0..0.1)).collect();
    rates[sink] = 0.0;
    NetworkTopology {
        node_count: v,
        positions: None,
        routing,
        generation_rates: rates,
        channel_loss: q,
    }
}

pub fn routing_matrix(t: &NetworkTopology) -> DMatrix<f64> {
    DMatrix::from_fn(t.node_count, t.node_count, |to, from| {
        t.routing.fraction(to, from)
    })
}

/// `[I - c R diag(1 - p)]^{-1} lambda` by dense LU.
pub fn dense_theta(t: &NetworkTopology, c: f64, loss: &[f64]) -> Vec<f64> {
    let v = t.node_count;
    let keep = DMatrix::from_diagonal(&DVector::from_iterator(v, loss.iter().map(|p| 1.0 - p)));
    let system = DMatrix::identity(v, v) - routing_matrix(t) * keep * c;
    let lambda = DVector::from_column_slice(&t.generation_rates);
    let theta = system
        .lu()
        .solve(&lambda)
        .expect("I - cR is unit triangular up to permutation");
    theta.iter().copied().collect()
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let scale = x.abs().max(y.abs());
            if scale == 0.0 {
                0.0
            } else {
                (x - y).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "[{}] criterion {id}: {name} -- {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}
