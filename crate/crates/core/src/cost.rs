//! Nonconvex maximum-likelihood cost, its disk relaxation, gradients, the
//! per-sensor single-source slices, and optimality-gap certificates.
//!
//! All sums run over edges in edge order and then over anchor links in
//! `(sensor, anchor)` order, so values are bit-reproducible.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{distance, gradient_scale, half_sq_excess, Point};
use crate::network::Problem;
use crate::positions::Positions;

/// A relaxed term counts as zero when its value is at most this.
pub const SLACK_TOLERANCE: f64 = 1e-12;

/// Value of the relaxed cost with its individual terms.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub value: f64,
    /// One term per edge, in edge order.
    pub per_edge_terms: Vec<f64>,
    /// One term per anchor link, in `(sensor, anchor)` order.
    pub per_anchor_terms: Vec<f64>,
}

/// Bounds on `f* - f̂*` obtained from a minimizer of the relaxed cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCertificate {
    pub fhat_star: f64,
    /// Sum of nonconvex costs over the relaxed terms that vanish at the minimizer.
    pub tight_bound: f64,
    /// `Σ ½ d_ij² + Σ ½ r_ik²`, available before solving.
    pub apriori_bound: f64,
    pub slack_edges: Vec<(usize, usize)>,
    /// `(sensor, anchor)` pairs whose relaxed term vanishes.
    pub slack_anchor_links: Vec<(usize, usize)>,
}

/// `f(x) = Σ_{i~j} ½(‖x_i - x_j‖ - d_ij)² + Σ_i Σ_{k∈A_i} ½(‖x_i - a_k‖ - r_ik)²`.
pub fn eval_f(problem: &Problem, x: &Positions) -> Result<f64> {
    problem.check_positions(x)?;
    Ok(f_value(problem, x))
}

pub(crate) fn f_value(problem: &Problem, x: &Positions) -> f64 {
    let mut total = 0.0;
    for (&(i, j), &d) in problem.edges().iter().zip(problem.edge_ranges()) {
        let gap = distance(x.node(i), x.node(j)) - d;
        total += 0.5 * gap * gap;
    }
    for l in problem.anchor_links() {
        let gap = distance(x.node(l.sensor), &problem.anchors()[l.anchor]) - l.range;
        total += 0.5 * gap * gap;
    }
    total
}

/// The disk relaxation `f̂`, term by term.
pub fn eval_fhat(problem: &Problem, x: &Positions) -> Result<CostReport> {
    problem.check_positions(x)?;
    let per_edge_terms: Vec<f64> = problem
        .edges()
        .iter()
        .zip(problem.edge_ranges())
        .map(|(&(i, j), &d)| half_sq_excess(distance(x.node(i), x.node(j)), d))
        .collect();
    let per_anchor_terms: Vec<f64> = problem
        .anchor_links()
        .iter()
        .map(|l| half_sq_excess(distance(x.node(l.sensor), &problem.anchors()[l.anchor]), l.range))
        .collect();
    let mut value = 0.0;
    for t in per_edge_terms.iter().chain(&per_anchor_terms) {
        value += t;
    }
    Ok(CostReport { value, per_edge_terms, per_anchor_terms })
}

/// Unchecked `f̂(x)`, bit-identical to `eval_fhat(..).value`.
pub(crate) fn fhat_value(problem: &Problem, x: &Positions) -> f64 {
    let mut total = 0.0;
    for (&(i, j), &d) in problem.edges().iter().zip(problem.edge_ranges()) {
        total += half_sq_excess(distance(x.node(i), x.node(j)), d);
    }
    for l in problem.anchor_links() {
        total += half_sq_excess(distance(x.node(l.sensor), &problem.anchors()[l.anchor]), l.range);
    }
    total
}

/// `∇f̂(x) = ℒx - Aᵀ P_B(Ax) + (Σ_{k∈A_i} x_i - P_{Ba_ik}(x_i))_i`.
pub fn grad_fhat(problem: &Problem, x: &Positions) -> Result<Positions> {
    problem.check_positions(x)?;
    let mut out = Positions::zeros(problem.sensor_count(), problem.dim());
    gradient_into(problem, x, &mut out);
    Ok(out)
}

pub(crate) fn gradient_into(problem: &Problem, x: &Positions, out: &mut Positions) {
    for i in 0..problem.sensor_count() {
        node_gradient_into(problem, x, i, out.node_mut(i));
    }
}

/// Block `i` of the relaxed gradient, computed from `x_i`, the neighbors'
/// positions and sensor `i`'s own measurements.
pub fn grad_fhat_node(problem: &Problem, x: &Positions, i: usize) -> Result<Point> {
    problem.check_positions(x)?;
    check_sensor(problem, i)?;
    let mut out = Point::zeros(problem.dim());
    node_gradient_into(problem, x, i, &mut out);
    Ok(out)
}

/// Per-node gradient: for each incident edge, `z - P_B(z)` with
/// `z = x_i - x_j` (the incidence sign cancels against the ball's symmetry),
/// plus `x_i - P_{Ba}(x_i)` for each anchor link.
#[inline]
pub(crate) fn node_gradient_into(problem: &Problem, x: &Positions, i: usize, out: &mut [f64]) {
    out.fill(0.0);
    let xi = x.node(i);
    let ranges = problem.edge_ranges();
    for nb in problem.neighbors(i) {
        let xj = x.node(nb.node);
        let s = gradient_scale(distance(xi, xj), ranges[nb.edge]);
        if s != 0.0 {
            for ((o, a), b) in out.iter_mut().zip(xi).zip(xj) {
                *o += s * (a - b);
            }
        }
    }
    for l in problem.links_of(i) {
        let a = &problem.anchors()[l.anchor];
        let s = gradient_scale(distance(xi, a), l.range);
        if s != 0.0 {
            for ((o, p), c) in out.iter_mut().zip(xi).zip(a.iter()) {
                *o += s * (p - c);
            }
        }
    }
}

fn check_sensor(problem: &Problem, i: usize) -> Result<()> {
    if i < problem.sensor_count() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("sensor {i} outside 0..{}", problem.sensor_count())))
    }
}

/// How shared edge terms are weighted in a single-source slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "kebab-case")]
pub enum EdgeWeighting {
    /// `¼ d²` per neighbor: each edge split evenly between its two endpoints,
    /// so the slices of all sensors sum to `f̂`.
    Shared,
    /// `½ d²` per neighbor: `f̂` restricted to one block, up to a constant.
    /// Its minimizer is the exact block-coordinate update.
    #[default]
    Block,
}

impl EdgeWeighting {
    fn weight(self) -> f64 {
        match self {
            EdgeWeighting::Shared => 0.5,
            EdgeWeighting::Block => 1.0,
        }
    }
}

/// The single-source localization problem seen by one sensor once its
/// neighbors' positions are frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleSource {
    dim: usize,
    /// Neighbor position and measured range.
    neighbors: Vec<(Point, f64)>,
    /// Anchor position and measured range.
    anchors: Vec<(Point, f64)>,
}

impl SingleSource {
    pub fn new(dim: usize, neighbors: Vec<(Point, f64)>, anchors: Vec<(Point, f64)>) -> Result<Self> {
        for (c, r) in neighbors.iter().chain(&anchors) {
            check_dim(dim, c.dim())?;
            if !(r.is_finite() && *r >= 0.0) {
                return Err(Error::MalformedMeasurement(format!("slice range {r}")));
            }
        }
        Ok(SingleSource { dim, neighbors, anchors })
    }

    /// Slice of sensor `i` with neighbor positions looked up in `neighbor_positions`.
    pub fn from_map(problem: &Problem, i: usize, neighbor_positions: &HashMap<usize, Point>) -> Result<Self> {
        check_sensor(problem, i)?;
        let mut neighbors = Vec::with_capacity(problem.degree(i));
        for nb in problem.neighbors(i) {
            let pos = neighbor_positions.get(&nb.node).ok_or_else(|| {
                Error::InvalidArgument(format!("missing position of neighbor {} of sensor {i}", nb.node))
            })?;
            check_dim(problem.dim(), pos.dim())?;
            neighbors.push((pos.clone(), problem.edge_ranges()[nb.edge]));
        }
        Ok(SingleSource { dim: problem.dim(), neighbors, anchors: anchor_terms(problem, i) })
    }

    pub(crate) fn from_positions(problem: &Problem, x: &Positions, i: usize) -> Self {
        let neighbors =
            problem.neighbors(i).iter().map(|nb| (x.point(nb.node), problem.edge_ranges()[nb.edge])).collect();
        SingleSource { dim: problem.dim(), neighbors, anchors: anchor_terms(problem, i) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `Σ_j w·½ d²_{Bs_ij}(z) + Σ_k ½ d²_{Ba_ik}(z)` with `w` set by `weighting`.
    pub fn value(&self, z: &[f64], weighting: EdgeWeighting) -> f64 {
        let w = weighting.weight();
        let mut total = 0.0;
        for (c, d) in &self.neighbors {
            total += w * half_sq_excess(distance(z, c), *d);
        }
        for (a, r) in &self.anchors {
            total += half_sq_excess(distance(z, a), *r);
        }
        total
    }

    pub fn gradient_into(&self, z: &[f64], weighting: EdgeWeighting, out: &mut [f64]) {
        let w = weighting.weight();
        out.fill(0.0);
        for (c, d) in &self.neighbors {
            let s = w * gradient_scale(distance(z, c), *d);
            if s != 0.0 {
                for ((o, zi), ci) in out.iter_mut().zip(z).zip(c.iter()) {
                    *o += s * (zi - ci);
                }
            }
        }
        for (a, r) in &self.anchors {
            let s = gradient_scale(distance(z, a), *r);
            if s != 0.0 {
                for ((o, zi), ci) in out.iter_mut().zip(z).zip(a.iter()) {
                    *o += s * (zi - ci);
                }
            }
        }
    }

    pub fn gradient(&self, z: &[f64], weighting: EdgeWeighting) -> Point {
        let mut out = Point::zeros(self.dim);
        self.gradient_into(z, weighting, &mut out);
        out
    }

    /// Lipschitz constant of the slice gradient, `w·|N_i| + |A_i|`.
    pub fn lipschitz(&self, weighting: EdgeWeighting) -> f64 {
        weighting.weight() * self.neighbors.len() as f64 + self.anchors.len() as f64
    }
}

fn anchor_terms(problem: &Problem, i: usize) -> Vec<(Point, f64)> {
    problem.links_of(i).iter().map(|l| (problem.anchors()[l.anchor].clone(), l.range)).collect()
}

/// Slice cost `f̂_sl_i(z) = Σ_{j∈N_i} ¼ d²_{Bs_ij}(z) + Σ_{k∈A_i} ½ d²_{Ba_ik}(z)`.
pub fn eval_slice(problem: &Problem, i: usize, neighbor_positions: &HashMap<usize, Point>, z: &[f64]) -> Result<f64> {
    check_dim(problem.dim(), z.len())?;
    Ok(SingleSource::from_map(problem, i, neighbor_positions)?.value(z, EdgeWeighting::Shared))
}

/// Gradient of [`eval_slice`]: `½ Σ_j (z - P_{Bs_ij}(z)) + Σ_k (z - P_{Ba_ik}(z))`.
pub fn grad_slice(problem: &Problem, i: usize, neighbor_positions: &HashMap<usize, Point>, z: &[f64]) -> Result<Point> {
    check_dim(problem.dim(), z.len())?;
    Ok(SingleSource::from_map(problem, i, neighbor_positions)?.gradient(z, EdgeWeighting::Shared))
}

/// Certificate for the gap between the nonconvex and relaxed optima.
///
/// Terms whose relaxed value is at most [`SLACK_TOLERANCE`] at `x_star` are
/// slack; their nonconvex costs sum to `tight_bound`.
pub fn gap_certificate(problem: &Problem, x_star: &Positions, fhat_star: f64) -> Result<GapCertificate> {
    let report = eval_fhat(problem, x_star)?;
    let mut tight_bound = 0.0;
    let mut slack_edges = Vec::new();
    for ((e, &(i, j)), &d) in problem.edges().iter().enumerate().zip(problem.edge_ranges()) {
        if report.per_edge_terms[e] <= SLACK_TOLERANCE {
            let gap = distance(x_star.node(i), x_star.node(j)) - d;
            tight_bound += 0.5 * gap * gap;
            slack_edges.push((i, j));
        }
    }
    let mut slack_anchor_links = Vec::new();
    for (t, l) in problem.anchor_links().iter().enumerate() {
        if report.per_anchor_terms[t] <= SLACK_TOLERANCE {
            let gap = distance(x_star.node(l.sensor), &problem.anchors()[l.anchor]) - l.range;
            tight_bound += 0.5 * gap * gap;
            slack_anchor_links.push((l.sensor, l.anchor));
        }
    }
    let apriori_bound = problem.edge_ranges().iter().map(|d| 0.5 * d * d).sum::<f64>()
        + problem.anchor_links().iter().map(|l| 0.5 * l.range * l.range).sum::<f64>();
    Ok(GapCertificate { fhat_star, tight_bound, apriori_bound, slack_edges, slack_anchor_links })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::AnchorLink;

    fn link(sensor: usize, anchor: usize, range: f64) -> AnchorLink {
        AnchorLink { sensor, anchor, range }
    }

    fn single_sensor() -> Problem {
        Problem::new(1, 2, vec![], vec![Point::from(vec![0.0, 0.0])], vec![link(0, 0, 1.0)]).unwrap()
    }

    #[test]
    fn nonconvex_cost_examples() {
        let x = Positions::from_rows(2, &[[2.0, 0.0]]).unwrap();
        assert_eq!(eval_f(&single_sensor(), &x).unwrap(), 0.5);
        assert!(eval_f(&single_sensor(), &Positions::zeros(2, 2)).is_err());
    }

    #[test]
    fn relaxed_cost_examples() {
        let p = Problem::new(2, 1, vec![((0, 1), 0.5)], vec![Point::from(vec![0.0])], vec![link(0, 0, 5.0)]).unwrap();
        let x = Positions::from_flat(1, vec![1.0, 0.0]).unwrap();
        let report = eval_fhat(&p, &x).unwrap();
        assert_eq!(report.per_edge_terms, vec![0.125]);
        assert_eq!(report.per_anchor_terms, vec![0.0]);
        assert_eq!(report.value, 0.125);

        let inside = Positions::from_flat(1, vec![0.2, 0.0]).unwrap();
        assert_eq!(eval_fhat(&p, &inside).unwrap().value, 0.0);
    }

    #[test]
    fn gradient_examples() {
        let x = Positions::from_rows(2, &[[2.0, 0.0]]).unwrap();
        assert_eq!(grad_fhat(&single_sensor(), &x).unwrap().as_slice(), &[1.0, 0.0]);

        // every difference strictly inside its ball: zero gradient
        let p = Problem::new(
            3,
            2,
            vec![((0, 1), 1.0), ((1, 2), 1.0)],
            vec![Point::from(vec![0.0, 0.0])],
            vec![link(0, 0, 1.0)],
        )
        .unwrap();
        let x = Positions::from_rows(2, &[[0.1, 0.0], [0.2, 0.1], [0.3, 0.3]]).unwrap();
        assert_eq!(grad_fhat(&p, &x).unwrap(), Positions::zeros(3, 2));
    }

    #[test]
    fn node_gradient_cases() {
        // star center 0 with three satisfied neighbors and one violated anchor link
        let p = Problem::new(
            4,
            2,
            vec![((0, 1), 1.0), ((0, 2), 1.0), ((0, 3), 1.0)],
            vec![Point::from(vec![3.0, 0.0])],
            vec![link(0, 0, 1.0)],
        )
        .unwrap();
        let x = Positions::from_rows(2, &[[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [-0.5, 0.0]]).unwrap();
        assert_eq!(grad_fhat_node(&p, &x, 0).unwrap().0, vec![-2.0, 0.0]);
        assert_eq!(grad_fhat_node(&p, &x, 2).unwrap().0, vec![0.0, 0.0]);
        assert!(grad_fhat_node(&p, &x, 4).is_err());
    }

    #[test]
    fn slice_examples() {
        let two_anchors = Problem::new(
            1,
            2,
            vec![],
            vec![Point::from(vec![0.0, 0.0]), Point::from(vec![2.0, 0.0])],
            vec![link(0, 0, 1.0), link(0, 1, 1.0)],
        )
        .unwrap();
        let none = HashMap::new();
        assert_eq!(eval_slice(&two_anchors, 0, &none, &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(grad_slice(&two_anchors, 0, &none, &[1.0, 0.0]).unwrap().0, vec![0.0, 0.0]);

        let pair =
            Problem::new(2, 2, vec![((0, 1), 1.0)], vec![Point::from(vec![9.0, 9.0])], vec![link(1, 0, 20.0)]).unwrap();
        let neighbors = HashMap::from([(1, Point::from(vec![0.0, 0.0]))]);
        assert_eq!(eval_slice(&pair, 0, &neighbors, &[3.0, 0.0]).unwrap(), 1.0);
        assert_eq!(grad_slice(&pair, 0, &neighbors, &[3.0, 0.0]).unwrap().0, vec![1.0, 0.0]);
        assert!(eval_slice(&pair, 0, &HashMap::new(), &[3.0, 0.0]).is_err());
    }

    #[test]
    fn certificate_examples() {
        let p = Problem::new(2, 1, vec![((0, 1), 0.5)], vec![Point::from(vec![0.0])], vec![link(0, 0, 0.0)]).unwrap();
        // anchor term slack at distance 0 from a zero-range anchor contributes nothing
        let x = Positions::from_flat(1, vec![0.0, -0.2]).unwrap();
        let cert = gap_certificate(&p, &x, 0.0).unwrap();
        assert!((cert.tight_bound - 0.045).abs() < 1e-15);
        assert_eq!(cert.apriori_bound, 0.125);
        assert_eq!(cert.slack_edges, vec![(0, 1)]);
        assert_eq!(cert.slack_anchor_links, vec![(0, 0)]);

        // all relaxed terms strictly positive: exact relaxation
        let q = Problem::new(1, 1, vec![], vec![Point::from(vec![0.0])], vec![link(0, 0, 1.0)]).unwrap();
        let cert = gap_certificate(&q, &Positions::from_flat(1, vec![3.0]).unwrap(), 2.0).unwrap();
        assert_eq!(cert.tight_bound, 0.0);
        assert!(cert.slack_anchor_links.is_empty());
        assert_eq!(cert.apriori_bound, 0.5);
    }
}
