//! Cross-checks against independent dense or brute-force computations.

mod common;

use common::{dense_theta, max_rel_diff, random_dag, routing_matrix};
use ehwsn_core::allocation::almost_fair_allocation;
use ehwsn_core::profile::MICAZ_SOLAR;
use ehwsn_core::{generate_network, solve_flow, GenerationConfig, HarvestingAllocation};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn flow_matches_dense_solve_with_node_losses() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..30 {
        let v = rng.random_range(2..40usize);
        let t = random_dag(v, seed, 0.01);
        let alloc = HarvestingAllocation {
            mu: (0..v - 1).map(|_| rng.random_range(0.0..0.3)).collect(),
            cap: (0..v - 1).map(|_| rng.random_range(1..50) as f64).collect(),
        };
        let flow = solve_flow(&t, &alloc).unwrap();
        // Given the converged losses, theta solves a linear system.
        let dense = dense_theta(&t, 1.0 - t.channel_loss, &flow.node_loss);
        assert!(max_rel_diff(&flow.theta, &dense) <= 1e-10, "seed {seed}");
        let delivered = flow.theta[v - 1] / t.total_generation_rate();
        assert!((1.0 - delivered - flow.network_loss).abs() <= 1e-12);
    }
}

#[test]
fn routing_power_vanishes() {
    for seed in 0..20 {
        let v = 2 + seed as usize * 3;
        let r = routing_matrix(&random_dag(v, seed, 0.0));
        let mut power = DMatrix::identity(v, v);
        for _ in 0..v {
            power = &r * power;
        }
        assert_eq!(power.amax(), 0.0, "seed {seed}");
    }
}

/// All-pairs shortest paths on squared-distance link costs.
fn floyd_warshall(positions: &[[f64; 2]], radius: f64) -> Vec<Vec<f64>> {
    let v = positions.len();
    let d2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let mut dist = vec![vec![f64::INFINITY; v]; v];
    for i in 0..v {
        dist[i][i] = 0.0;
        for j in 0..v {
            let c = d2(positions[i], positions[j]);
            if i != j && c.sqrt() < radius {
                dist[i][j] = c;
            }
        }
    }
    for k in 0..v {
        for i in 0..v {
            for j in 0..v {
                let via = dist[i][k] + dist[k][j];
                if via < dist[i][j] {
                    dist[i][j] = via;
                }
            }
        }
    }
    dist
}

#[test]
fn generated_routes_are_shortest_paths() {
    for seed in 0..25 {
        let v = 5 + seed as usize * 3;
        let config = GenerationConfig {
            node_count: v,
            rng_seed: seed,
            max_retries: 100_000,
            ..GenerationConfig::default()
        };
        let t = generate_network(&config, &MICAZ_SOLAR.generation_rates(v)).unwrap();
        let positions = t.positions.as_ref().unwrap();
        let dist = floyd_warshall(positions, config.connectivity_radius);
        let sink = v - 1;
        for from in 0..sink {
            let hops: Vec<(usize, f64)> = t.routing.successors(from).collect();
            assert_eq!(hops.len(), 1, "single next hop");
            let (to, fraction) = hops[0];
            assert_eq!(fraction, 1.0);
            // Taking the link and then the best path from there is optimal.
            let link = (positions[from][0] - positions[to][0]).powi(2)
                + (positions[from][1] - positions[to][1]).powi(2);
            assert!(link.sqrt() < config.connectivity_radius);
            let total = link + dist[to][sink];
            assert!(
                (total - dist[from][sink]).abs() <= 1e-9 * dist[from][sink],
                "seed {seed} node {from}"
            );
        }
    }
}

#[test]
fn loss_falls_when_one_node_gets_more_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..20 {
        let v = rng.random_range(3..30usize);
        let t = random_dag(v, 100 + seed, 1e-5);
        let budget = ehwsn_core::ResourceBudget {
            mu_avg: 0.02,
            cap_avg: 5.0,
        };
        let base = almost_fair_allocation(&t, &budget).unwrap();
        let before = solve_flow(&t, &base).unwrap().network_loss;
        let node = rng.random_range(0..v - 1);
        let mut richer = base.clone();
        richer.mu[node] *= 1.5;
        let after = solve_flow(&t, &richer).unwrap().network_loss;
        assert!(after <= before, "seed {seed}: {after} > {before}");
    }
}
