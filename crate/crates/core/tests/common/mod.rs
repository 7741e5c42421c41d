#![allow(dead_code)]

use locnet_core::{gen_measurements, generate_with_average_degree, Positions, Problem, Topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Ten sensors in the unit square, corner anchors, average degree near 4.3.
pub fn network1(seed: u64, sigma: f64) -> (Topology, Problem) {
    let topo = generate_with_average_degree(10, 2, 4.3, true, 0, seed).unwrap();
    let m = gen_measurements(&topo, sigma, seed ^ 0xA5A5).unwrap();
    let problem = topo.with_measurements(&m.edge_ranges, &m.link_ranges).unwrap();
    (topo, problem)
}

pub fn random_positions(rng: &mut ChaCha8Rng, n: usize, dim: usize, lo: f64, hi: f64) -> Positions {
    let coords = (0..n * dim).map(|_| rng.random_range(lo..hi)).collect();
    Positions::from_flat(dim, coords).unwrap()
}

/// Smallest gap between any pairwise or anchor distance and its measurement.
pub fn boundary_clearance(problem: &Problem, x: &Positions) -> f64 {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    let mut m = f64::INFINITY;
    for (&(i, j), &d) in problem.edges().iter().zip(problem.edge_ranges()) {
        m = m.min((dist(x.node(i), x.node(j)) - d).abs());
    }
    for l in problem.anchor_links() {
        m = m.min((dist(x.node(l.sensor), &problem.anchors()[l.anchor]) - l.range).abs());
    }
    m
}
