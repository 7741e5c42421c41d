//! Problem instances: the sensor graph, anchor links and range measurements,
//! the incidence and Laplacian operators on stacked positions, and random
//! geometric network generation.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, Point};
use crate::positions::Positions;

/// Retry budget for drawing a network that satisfies the connectivity assumption.
pub const GENERATION_ATTEMPTS: usize = 100;

/// A sensor neighbor as seen from one endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub node: usize,
    pub edge: usize,
}

/// A range measurement between sensor `sensor` and anchor `anchor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorLink {
    pub sensor: usize,
    pub anchor: usize,
    pub range: f64,
}

/// An immutable, validated localization problem.
///
/// Edges are stored as `(i, j)` with `i < j` in lexicographic order; the
/// incidence matrix carries `+1` at `i` and `-1` at `j`. Ground-truth
/// positions are never part of a `Problem`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    n: usize,
    dim: usize,
    edges: Vec<(usize, usize)>,
    edge_ranges: Vec<f64>,
    anchors: Vec<Point>,
    links: Vec<AnchorLink>,
    adjacency: Vec<Vec<Neighbor>>,
    link_offsets: Vec<usize>,
}

/// File form of a [`Problem`]; indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct ProblemData {
    pub n: usize,
    pub p: usize,
    pub edges: Vec<[usize; 2]>,
    pub edge_measurements: Vec<f64>,
    pub anchors: Vec<Vec<f64>>,
    pub anchor_links: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Positions>,
}

impl Problem {
    /// Builds and validates a problem. Edges may be given in either
    /// orientation; they are stored canonically.
    pub fn new(
        n: usize,
        dim: usize,
        edges: Vec<((usize, usize), f64)>,
        anchors: Vec<Point>,
        links: Vec<AnchorLink>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("problem has no sensors".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        for (k, a) in anchors.iter().enumerate() {
            if a.dim() != dim {
                return Err(Error::InvalidArgument(format!("anchor {k} has dimension {}, expected {dim}", a.dim())));
            }
            if !a.is_finite() {
                return Err(Error::InvalidArgument(format!("anchor {k} is not finite")));
            }
        }

        let mut canonical = BTreeMap::new();
        for ((a, b), d) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!("edge ({a}, {b}) references a sensor outside 0..{n}")));
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at sensor {a}")));
            }
            check_measurement(d, || format!("edge ({a}, {b})"))?;
            let key = (a.min(b), a.max(b));
            if canonical.insert(key, d).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate edge ({}, {})", key.0, key.1)));
            }
        }
        let (edges, edge_ranges): (Vec<_>, Vec<_>) = canonical.into_iter().unzip();

        let mut links = links;
        for l in &links {
            if l.sensor >= n {
                return Err(Error::InvalidArgument(format!(
                    "anchor link references sensor {} outside 0..{n}",
                    l.sensor
                )));
            }
            if l.anchor >= anchors.len() {
                return Err(Error::InvalidArgument(format!(
                    "anchor link references anchor {} but only {} anchors exist",
                    l.anchor,
                    anchors.len()
                )));
            }
            check_measurement(l.range, || format!("anchor link (sensor {}, anchor {})", l.sensor, l.anchor))?;
        }
        links.sort_by_key(|l| (l.sensor, l.anchor));
        if let Some(w) = links.windows(2).find(|w| (w[0].sensor, w[0].anchor) == (w[1].sensor, w[1].anchor)) {
            return Err(Error::InvalidArgument(format!(
                "duplicate anchor link (sensor {}, anchor {})",
                w[0].sensor, w[0].anchor
            )));
        }

        check_assumption(n, &edges, links.len())?;

        let mut adjacency = vec![Vec::new(); n];
        for (e, &(i, j)) in edges.iter().enumerate() {
            adjacency[i].push(Neighbor { node: j, edge: e });
            adjacency[j].push(Neighbor { node: i, edge: e });
        }
        let mut link_offsets = vec![0; n + 1];
        for l in &links {
            link_offsets[l.sensor + 1] += 1;
        }
        for i in 0..n {
            link_offsets[i + 1] += link_offsets[i];
        }

        Ok(Problem { n, dim, edges, edge_ranges, anchors, links, adjacency, link_offsets })
    }

    pub fn from_data(data: &ProblemData) -> Result<Self> {
        if data.edges.len() != data.edge_measurements.len() {
            return Err(Error::MalformedMeasurement(format!(
                "{} edges but {} edge measurements",
                data.edges.len(),
                data.edge_measurements.len()
            )));
        }
        let edges = data.edges.iter().zip(&data.edge_measurements).map(|(&[i, j], &d)| ((i, j), d)).collect();
        let anchors = data.anchors.iter().cloned().map(Point::from).collect();
        let links =
            data.anchor_links.iter().map(|&(sensor, anchor, range)| AnchorLink { sensor, anchor, range }).collect();
        if let Some(truth) = &data.truth {
            truth.check_shape(data.n, data.p)?;
        }
        Problem::new(data.n, data.p, edges, anchors, links)
    }

    pub fn to_data(&self, truth: Option<&Positions>) -> ProblemData {
        ProblemData {
            n: self.n,
            p: self.dim,
            edges: self.edges.iter().map(|&(i, j)| [i, j]).collect(),
            edge_measurements: self.edge_ranges.clone(),
            anchors: self.anchors.iter().map(|a| a.0.clone()).collect(),
            anchor_links: self.links.iter().map(|l| (l.sensor, l.anchor, l.range)).collect(),
            truth: truth.cloned(),
        }
    }

    pub fn sensor_count(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_ranges(&self) -> &[f64] {
        &self.edge_ranges
    }

    pub fn anchors(&self) -> &[Point] {
        &self.anchors
    }

    /// All anchor links, sorted by `(sensor, anchor)`.
    pub fn anchor_links(&self) -> &[AnchorLink] {
        &self.links
    }

    /// Anchor links of sensor `i`, sorted by anchor index.
    pub fn links_of(&self, i: usize) -> &[AnchorLink] {
        &self.links[self.link_offsets[i]..self.link_offsets[i + 1]]
    }

    /// Neighbors of sensor `i`, in edge order.
    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn average_degree(&self) -> f64 {
        2.0 * self.edges.len() as f64 / self.n as f64
    }

    pub fn max_anchor_links(&self) -> usize {
        (0..self.n).map(|i| self.links_of(i).len()).max().unwrap_or(0)
    }

    /// Lipschitz constant of the relaxed cost gradient, `2 δ_max + max_i |A_i|`.
    pub fn lipschitz_fhat(&self) -> f64 {
        (2 * self.max_degree() + self.max_anchor_links()) as f64
    }

    /// Variant of [`Problem::lipschitz_fhat`] that bounds the Laplacian
    /// spectrum by `max_{i~j} (δ_i + δ_j - c(i, j))`, with `c` the number of
    /// common neighbors. Never larger than the degree bound.
    pub fn lipschitz_fhat_common_neighbor(&self) -> f64 {
        let laplacian_bound = self
            .edges
            .iter()
            .map(|&(i, j)| {
                let common =
                    self.adjacency[i].iter().filter(|a| self.adjacency[j].iter().any(|b| b.node == a.node)).count();
                self.degree(i) + self.degree(j) - common
            })
            .max()
            .unwrap_or(0);
        (laplacian_bound + self.max_anchor_links()) as f64
    }

    pub(crate) fn check_positions(&self, x: &Positions) -> Result<()> {
        x.check_shape(self.n, self.dim)
    }
}

fn check_measurement(d: f64, what: impl FnOnce() -> String) -> Result<()> {
    if d.is_finite() && d >= 0.0 {
        Ok(())
    } else {
        Err(Error::MalformedMeasurement(format!("{} has measurement {d}", what())))
    }
}

/// Checks that the sensor graph is connected and at least one anchor link exists.
fn check_assumption(n: usize, edges: &[(usize, usize)], link_count: usize) -> Result<()> {
    let mut adjacency = vec![Vec::new(); n];
    for &(i, j) in edges {
        adjacency[i].push(j);
        adjacency[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &adjacency[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    if let Some(unreachable) = seen.iter().position(|s| !s) {
        return Err(Error::DisconnectedGraph { unreachable });
    }
    if link_count == 0 {
        return Err(Error::NoAnchorLink);
    }
    Ok(())
}

/// Validates a problem document without keeping the result.
pub fn validate(data: &ProblemData) -> Result<()> {
    Problem::from_data(data).map(|_| ())
}

/// Merges directed measurements into one value per undirected edge,
/// averaging `(i, j)` and `(j, i)` when both are present.
pub fn symmetrize_measurements(raw: &BTreeMap<(usize, usize), f64>) -> Result<BTreeMap<(usize, usize), f64>> {
    let mut out = BTreeMap::new();
    for (&(i, j), &d) in raw {
        check_measurement(d, || format!("directed measurement ({i}, {j})"))?;
        if i == j {
            return Err(Error::MalformedMeasurement(format!("self-measurement at sensor {i}")));
        }
        let key = (i.min(j), i.max(j));
        if out.contains_key(&key) {
            continue;
        }
        let value = match raw.get(&(j, i)) {
            Some(&back) => {
                check_measurement(back, || format!("directed measurement ({j}, {i})"))?;
                (d + back) / 2.0
            }
            None => d,
        };
        out.insert(key, value);
    }
    Ok(out)
}

/// Stacked per-edge vectors, one block of dimension `p` per edge in edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeVector(pub Positions);

/// `A x`: block `(i, j)` is `x_i - x_j`.
pub fn incidence_apply(problem: &Problem, x: &Positions) -> Result<EdgeVector> {
    problem.check_positions(x)?;
    let mut out = Positions::zeros(problem.edges.len(), problem.dim);
    for (e, &(i, j)) in problem.edges.iter().enumerate() {
        for ((o, a), b) in out.node_mut(e).iter_mut().zip(x.node(i)).zip(x.node(j)) {
            *o = a - b;
        }
    }
    Ok(EdgeVector(out))
}

/// `Aᵀ e`: node `i` collects `+e_(i,j)` for edges where it is the smaller
/// endpoint and `-e_(j,i)` otherwise.
pub fn incidence_transpose_apply(problem: &Problem, e: &EdgeVector) -> Result<Positions> {
    e.0.check_shape(problem.edges.len(), problem.dim)?;
    let mut out = Positions::zeros(problem.n, problem.dim);
    for i in 0..problem.n {
        let acc = out.node_mut(i);
        for nb in &problem.adjacency[i] {
            let sign = if i < nb.node { 1.0 } else { -1.0 };
            for (o, v) in acc.iter_mut().zip(e.0.node(nb.edge)) {
                *o += sign * v;
            }
        }
    }
    Ok(out)
}

/// `ℒ x`: node `i` gets `δ_i x_i - Σ_{j ∈ N_i} x_j`.
pub fn laplacian_apply(problem: &Problem, x: &Positions) -> Result<Positions> {
    problem.check_positions(x)?;
    let mut out = Positions::zeros(problem.n, problem.dim);
    for i in 0..problem.n {
        let xi = x.node(i);
        let acc = out.node_mut(i);
        for nb in &problem.adjacency[i] {
            for ((o, a), b) in acc.iter_mut().zip(xi).zip(x.node(nb.node)) {
                *o += a - b;
            }
        }
    }
    Ok(out)
}

/// Parameters for a random geometric network in the unit square or cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct GeometricParams {
    pub n: usize,
    #[serde(default = "default_dim")]
    pub p: usize,
    /// Connection radius for both sensor-sensor and sensor-anchor links.
    pub radius: f64,
    #[serde(default = "default_true")]
    pub anchors_at_corners: bool,
    /// Additional anchors placed uniformly at random.
    #[serde(default)]
    pub random_anchors: usize,
}

fn default_dim() -> usize {
    2
}

fn default_true() -> bool {
    true
}

/// A generated network: topology, anchors and the hidden ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub dim: usize,
    pub edges: Vec<(usize, usize)>,
    pub anchors: Vec<Point>,
    /// `(sensor, anchor)` pairs in lexicographic order.
    pub anchor_links: Vec<(usize, usize)>,
    pub truth: Positions,
    pub radius: f64,
}

impl Topology {
    pub fn sensor_count(&self) -> usize {
        self.truth.len()
    }

    pub fn average_degree(&self) -> f64 {
        2.0 * self.edges.len() as f64 / self.sensor_count() as f64
    }

    /// Attaches measurements aligned with `edges` and `anchor_links`.
    pub fn with_measurements(&self, edge_ranges: &[f64], link_ranges: &[f64]) -> Result<Problem> {
        if edge_ranges.len() != self.edges.len() || link_ranges.len() != self.anchor_links.len() {
            return Err(Error::MalformedMeasurement(format!(
                "expected {} edge and {} anchor measurements, got {} and {}",
                self.edges.len(),
                self.anchor_links.len(),
                edge_ranges.len(),
                link_ranges.len()
            )));
        }
        let edges = self.edges.iter().copied().zip(edge_ranges.iter().copied()).collect();
        let links = self
            .anchor_links
            .iter()
            .zip(link_ranges)
            .map(|(&(sensor, anchor), &range)| AnchorLink { sensor, anchor, range })
            .collect();
        Problem::new(self.sensor_count(), self.dim, edges, self.anchors.clone(), links)
    }

    /// Recovers a topology from a problem document carrying ground truth.
    pub fn from_data(data: &ProblemData) -> Result<Self> {
        let problem = Problem::from_data(data)?;
        let truth = data
            .truth
            .clone()
            .ok_or_else(|| Error::InvalidArgument("problem document has no ground-truth positions".into()))?;
        Ok(Topology {
            dim: problem.dim,
            edges: problem.edges.clone(),
            anchors: problem.anchors.clone(),
            anchor_links: problem.links.iter().map(|l| (l.sensor, l.anchor)).collect(),
            truth,
            radius: f64::NAN,
        })
    }
}

/// Corners of the unit hypercube, in binary counting order.
pub fn corner_anchors(dim: usize) -> Vec<Point> {
    (0..1usize << dim).map(|c| (0..dim).map(|k| ((c >> k) & 1) as f64).collect::<Vec<_>>().into()).collect()
}

fn sample_positions(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Positions {
    let coords = (0..n * dim).map(|_| rng.random::<f64>()).collect();
    Positions::from_flat(dim, coords).expect("dimension divides the coordinate count")
}

fn build_topology(truth: Positions, anchors: Vec<Point>, radius: f64) -> Topology {
    let n = truth.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if distance(truth.node(i), truth.node(j)) <= radius {
                edges.push((i, j));
            }
        }
    }
    let mut anchor_links = Vec::new();
    for i in 0..n {
        for (k, a) in anchors.iter().enumerate() {
            if distance(truth.node(i), a) <= radius {
                anchor_links.push((i, k));
            }
        }
    }
    Topology { dim: truth.dim(), edges, anchors, anchor_links, truth, radius }
}

fn check_params(n: usize, dim: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("network needs at least one sensor".into()));
    }
    if !(1..=16).contains(&dim) {
        return Err(Error::InvalidArgument(format!("unsupported dimension {dim}")));
    }
    Ok(())
}

fn anchors_for(params_corners: bool, random: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut anchors = if params_corners { corner_anchors(dim) } else { Vec::new() };
    for _ in 0..random {
        anchors.push((0..dim).map(|_| rng.random::<f64>()).collect::<Vec<_>>().into());
    }
    anchors
}

/// Draws sensors uniformly in the unit box and links every pair within
/// `radius`. Redraws until the graph is connected and some sensor reaches
/// an anchor, at most [`GENERATION_ATTEMPTS`] times.
pub fn generate_geometric(params: &GeometricParams, seed: u64) -> Result<Topology> {
    check_params(params.n, params.p)?;
    if !(params.radius > 0.0 && params.radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("connection radius must be positive, got {}", params.radius)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..GENERATION_ATTEMPTS {
        let anchors = anchors_for(params.anchors_at_corners, params.random_anchors, params.p, &mut rng);
        let truth = sample_positions(&mut rng, params.n, params.p);
        let topo = build_topology(truth, anchors, params.radius);
        if check_assumption(params.n, &topo.edges, topo.anchor_links.len()).is_ok() {
            return Ok(topo);
        }
    }
    Err(Error::GenerationFailure { attempts: GENERATION_ATTEMPTS })
}

/// Like [`generate_geometric`], but picks the radius per draw so that the
/// edge count is `round(target · n / 2)`.
pub fn generate_with_average_degree(
    n: usize,
    dim: usize,
    target_average_degree: f64,
    anchors_at_corners: bool,
    random_anchors: usize,
    seed: u64,
) -> Result<Topology> {
    check_params(n, dim)?;
    if !(target_average_degree >= 0.0 && target_average_degree.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "target average degree must be nonnegative, got {target_average_degree}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..GENERATION_ATTEMPTS {
        let anchors = anchors_for(anchors_at_corners, random_anchors, dim, &mut rng);
        let truth = sample_positions(&mut rng, n, dim);
        let radius = radius_for_edge_count(&truth, target_average_degree);
        let topo = build_topology(truth, anchors, radius);
        if check_assumption(n, &topo.edges, topo.anchor_links.len()).is_ok() {
            return Ok(topo);
        }
    }
    Err(Error::GenerationFailure { attempts: GENERATION_ATTEMPTS })
}

fn radius_for_edge_count(truth: &Positions, target_average_degree: f64) -> f64 {
    let n = truth.len();
    let mut dists: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| distance(truth.node(i), truth.node(j)))
        .collect();
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let wanted = ((target_average_degree * n as f64 / 2.0).round() as usize).min(dists.len());
    match wanted {
        0 => dists[0] / 2.0,
        m if m == dists.len() => dists[m - 1],
        m => 0.5 * (dists[m - 1] + dists[m]),
    }
}

/// Finds, by bisection, the radius whose mean average degree over the given
/// seeds matches `target`. Each seed contributes its first draw of positions.
pub fn calibrate_radius(n: usize, dim: usize, target: f64, seeds: &[u64]) -> Result<f64> {
    check_params(n, dim)?;
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("calibration needs at least one seed".into()));
    }
    let draws: Vec<Positions> = seeds
        .iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            sample_positions(&mut rng, n, dim)
        })
        .collect();
    let mean_degree = |r: f64| {
        draws.iter().map(|t| build_topology(t.clone(), Vec::new(), r).average_degree()).sum::<f64>()
            / draws.len() as f64
    };
    let (mut lo, mut hi) = (0.0, (dim as f64).sqrt());
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mean_degree(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
