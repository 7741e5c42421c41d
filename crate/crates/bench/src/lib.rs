//! Fixtures shared by the benchmarks.

use locnet_core::{gen_measurements, generate_with_average_degree, Problem};

/// Random network in the unit square with corner anchors and noisy ranges.
pub fn network(n: usize, average_degree: f64, sigma: f64, seed: u64) -> Problem {
    let topo = generate_with_average_degree(n, 2, average_degree, true, 0, seed).expect("benchmark network");
    let m = gen_measurements(&topo, sigma, seed).expect("benchmark measurements");
    topo.with_measurements(&m.edge_ranges, &m.link_ranges).expect("benchmark problem")
}
