//! Monte Carlo experiments: noisy range generation, per-trial solves and
//! aggregation across noise levels and solvers.

use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{f_value, gap_certificate};
use crate::error::{Error, Result};
use crate::geometry::distance;
use crate::network::{generate_geometric, generate_with_average_degree, GeometricParams, ProblemData, Topology};
use crate::positions::Positions;
use crate::solvers::{solve, stream_rng, SolverKind, SolverOptions, Termination};

/// Range measurements aligned with a topology's edges and anchor links.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub edge_ranges: Vec<f64>,
    pub link_ranges: Vec<f64>,
}

/// Draws `|‖x_i - x_j‖ + ν|` for every edge and `|‖x_i - a_k‖ + ν|` for every
/// anchor link, with independent `ν ~ N(0, σ²)`, edges first.
pub fn gen_measurements(topology: &Topology, sigma: f64, seed: u64) -> Result<Measurements> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise level must be nonnegative, got {sigma}")));
    }
    let truth = &topology.truth;
    let mut rng = stream_rng(seed, 0);
    let mut noisy = |d: f64| {
        let nu: f64 = StandardNormal.sample(&mut rng);
        (d + sigma * nu).abs()
    };
    let edge_ranges = topology.edges.iter().map(|&(i, j)| noisy(distance(truth.node(i), truth.node(j)))).collect();
    let link_ranges =
        topology.anchor_links.iter().map(|&(i, k)| noisy(distance(truth.node(i), &topology.anchors[k]))).collect();
    Ok(Measurements { edge_ranges, link_ranges })
}

/// Root mean squared error per sensor, `√((1/n)(1/M) Σ_m ‖x* - x̂(m)‖²)`.
pub fn rmse(estimates: &[Positions], truth: &Positions) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("RMSE needs at least one estimate".into()));
    }
    let mut total = 0.0;
    for e in estimates {
        e.check_shape(truth.len(), truth.dim())?;
        total += e.distance(truth).powi(2);
    }
    Ok((total / (truth.len() as f64 * estimates.len() as f64)).sqrt())
}

/// Where an experiment's network comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NetworkSource {
    Geometric {
        #[serde(flatten)]
        params: GeometricParams,
        seed: u64,
    },
    AverageDegree {
        n: usize,
        #[serde(default = "two")]
        p: usize,
        target_average_degree: f64,
        #[serde(default = "yes")]
        anchors_at_corners: bool,
        #[serde(default)]
        random_anchors: usize,
        seed: u64,
    },
    /// A problem document; its `truth` block is required and its measurements are ignored.
    Inline { problem: ProblemData },
}

fn two() -> usize {
    2
}

fn yes() -> bool {
    true
}

impl NetworkSource {
    pub fn topology(&self) -> Result<Topology> {
        match self {
            NetworkSource::Geometric { params, seed } => generate_geometric(params, *seed),
            NetworkSource::AverageDegree { n, p, target_average_degree, anchors_at_corners, random_anchors, seed } => {
                generate_with_average_degree(
                    *n,
                    *p,
                    *target_average_degree,
                    *anchors_at_corners,
                    *random_anchors,
                    *seed,
                )
            }
            NetworkSource::Inline { problem } => Topology::from_data(problem),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub solver: SolverKind,
    #[serde(default)]
    pub options: SolverOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkSource,
    pub noise_sigmas: Vec<f64>,
    pub trials: usize,
    pub solvers: Vec<SolverConfig>,
    #[serde(default)]
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("an experiment needs at least one trial".into()));
        }
        if self.noise_sigmas.is_empty() || self.solvers.is_empty() {
            return Err(Error::InvalidArgument("an experiment needs noise levels and solvers".into()));
        }
        if let Some(s) = self.noise_sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!("noise level must be nonnegative, got {s}")));
        }
        for s in &self.solvers {
            s.options.validate()?;
        }
        Ok(())
    }
}

const MEASUREMENT_SEED: u64 = 1;
const INIT_SEED: u64 = 2;

/// Child seed as a pure function of the master seed and a path of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

/// Outcome of one solver on one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub solver: SolverKind,
    pub solver_index: usize,
    pub sigma: f64,
    pub sigma_index: usize,
    pub trial: usize,
    /// `‖x* - x̂‖²`, this trial's contribution to the RMSE.
    pub squared_error: f64,
    pub fhat_final: f64,
    pub f_final: f64,
    pub tight_bound: f64,
    pub apriori_bound: f64,
    /// Mean broadcasts per sensor.
    pub broadcasts: f64,
    pub iterations: usize,
    pub termination: Termination,
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// A trial that could not be completed; kept out of the aggregates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub solver: Option<SolverKind>,
    pub sigma: f64,
    pub trial: usize,
    pub message: String,
}

/// Aggregates over the completed trials of one (solver, σ) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub solver: SolverKind,
    pub solver_index: usize,
    pub sigma: f64,
    pub trials: usize,
    pub rmse: f64,
    pub mean_fhat: f64,
    pub mean_f: f64,
    pub mean_tight_bound: f64,
    pub mean_apriori_bound: f64,
    pub mean_broadcasts: f64,
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub sensors: usize,
    pub average_degree: f64,
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentResult {
    pub fn aggregate(&self, solver_index: usize, sigma_index: usize, sigmas: usize) -> &Aggregate {
        &self.aggregates[solver_index * sigmas + sigma_index]
    }
}

/// Runs every configured solver on `trials` noise draws per noise level.
///
/// Trials run on the current rayon pool; results are ordered by
/// `(σ, trial, solver)` regardless of scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let topology = config.network.topology()?;
    let jobs: Vec<(usize, usize)> =
        (0..config.noise_sigmas.len()).flat_map(|s| (0..config.trials).map(move |m| (s, m))).collect();

    let outcomes: Vec<Vec<std::result::Result<TrialRecord, TrialFailure>>> =
        jobs.par_iter().map(|&(sigma_index, trial)| run_trial(config, &topology, sigma_index, trial)).collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes.into_iter().flatten() {
        match outcome {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    let aggregates = aggregate(config, topology.sensor_count(), &records);
    Ok(ExperimentResult {
        sensors: topology.sensor_count(),
        average_degree: topology.average_degree(),
        records,
        failures,
        aggregates,
    })
}

fn run_trial(
    config: &ExperimentConfig,
    topology: &Topology,
    sigma_index: usize,
    trial: usize,
) -> Vec<std::result::Result<TrialRecord, TrialFailure>> {
    let sigma = config.noise_sigmas[sigma_index];
    let fail = |solver, message: String| TrialFailure { solver, sigma, trial, message };
    let measurement_seed = derive_seed(config.master_seed, &[MEASUREMENT_SEED, sigma_index as u64, trial as u64]);
    let problem = match gen_measurements(topology, sigma, measurement_seed)
        .and_then(|m| topology.with_measurements(&m.edge_ranges, &m.link_ranges))
    {
        Ok(p) => p,
        Err(e) => return vec![Err(fail(None, e.to_string()))],
    };

    config
        .solvers
        .iter()
        .enumerate()
        .map(|(solver_index, sc)| {
            let mut opts = sc.options.clone();
            opts.rng_seed =
                derive_seed(config.master_seed, &[INIT_SEED, sigma_index as u64, trial as u64, solver_index as u64]);
            let started = Instant::now();
            let trace = solve(&problem, sc.solver, &opts).map_err(|e| fail(Some(sc.solver), e.to_string()))?;
            let wall_seconds = started.elapsed().as_secs_f64();
            let fhat_final = trace.final_fhat();
            let cert = gap_certificate(&problem, &trace.estimate, fhat_final)
                .map_err(|e| fail(Some(sc.solver), e.to_string()))?;
            Ok(TrialRecord {
                solver: sc.solver,
                solver_index,
                sigma,
                sigma_index,
                trial,
                squared_error: trace.estimate.distance(&topology.truth).powi(2),
                fhat_final,
                f_final: f_value(&problem, &trace.estimate),
                tight_bound: cert.tight_bound,
                apriori_bound: cert.apriori_bound,
                broadcasts: trace.mean_broadcasts(trace.final_record()),
                iterations: trace.iterations(),
                termination: trace.termination,
                wall_seconds,
            })
        })
        .collect()
}

/// Per-(solver, σ) aggregates, ordered solver-major.
pub fn aggregate(config: &ExperimentConfig, sensors: usize, records: &[TrialRecord]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for (solver_index, sc) in config.solvers.iter().enumerate() {
        for (sigma_index, &sigma) in config.noise_sigmas.iter().enumerate() {
            let cell: Vec<&TrialRecord> =
                records.iter().filter(|r| r.solver_index == solver_index && r.sigma_index == sigma_index).collect();
            let m = cell.len() as f64;
            let mean = |f: fn(&TrialRecord) -> f64| {
                if cell.is_empty() {
                    f64::NAN
                } else {
                    cell.iter().map(|r| f(r)).sum::<f64>() / m
                }
            };
            out.push(Aggregate {
                solver: sc.solver,
                solver_index,
                sigma,
                trials: cell.len(),
                rmse: (cell.iter().map(|r| r.squared_error).sum::<f64>() / (sensors as f64 * m)).sqrt(),
                mean_fhat: mean(|r| r.fhat_final),
                mean_f: mean(|r| r.f_final),
                mean_tight_bound: mean(|r| r.tight_bound),
                mean_apriori_bound: mean(|r| r.apriori_bound),
                mean_broadcasts: mean(|r| r.broadcasts),
                wall_seconds: cell.iter().map(|r| r.wall_seconds).sum(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn pair_topology() -> Topology {
        Topology {
            dim: 2,
            edges: vec![(0, 1)],
            anchors: vec![Point::from(vec![0.0, 0.0])],
            anchor_links: vec![(0, 0)],
            truth: Positions::from_rows(2, &[[0.3, 0.4], [1.3, 0.4]]).unwrap(),
            radius: 2.0,
        }
    }

    #[test]
    fn noiseless_measurements_are_exact() {
        let m = gen_measurements(&pair_topology(), 0.0, 5).unwrap();
        assert_eq!(m.edge_ranges, vec![1.0]);
        assert_eq!(m.link_ranges, vec![0.5]);
        assert!(gen_measurements(&pair_topology(), -0.1, 5).is_err());
    }

    #[test]
    fn measurements_are_seeded() {
        let a = gen_measurements(&pair_topology(), 0.1, 11).unwrap();
        assert_eq!(a, gen_measurements(&pair_topology(), 0.1, 11).unwrap());
        assert_ne!(a, gen_measurements(&pair_topology(), 0.1, 12).unwrap());
    }

    #[test]
    fn noise_is_unbiased_far_from_zero() {
        // sample-mean oracle: 10^4 draws at true distance 1, σ = 0.1
        let sigma = 0.1;
        let draws = 10_000;
        let topo = pair_topology();
        let mut total = 0.0;
        for s in 0..draws {
            total += gen_measurements(&topo, sigma, s).unwrap().edge_ranges[0] - 1.0;
        }
        let mean = total / draws as f64;
        assert!(mean.abs() <= 3.0 * sigma / 100.0, "{mean}");
    }

    #[test]
    fn rmse_examples() {
        let truth = Positions::from_rows(2, &[[0.0, 0.0]]).unwrap();
        assert_eq!(rmse(std::slice::from_ref(&truth), &truth).unwrap(), 0.0);
        let off = Positions::from_rows(2, &[[3.0, 4.0]]).unwrap();
        assert_eq!(rmse(&[off], &truth).unwrap(), 5.0);

        let truth = Positions::zeros(2, 2);
        let e1 = Positions::from_rows(2, &[[3.0, 4.0], [0.0, 0.0]]).unwrap();
        let e2 = Positions::from_rows(2, &[[0.0, 0.0], [0.0, 5.0]]).unwrap();
        assert_eq!(rmse(&[e1, e2], &truth).unwrap(), 12.5f64.sqrt());

        assert!(rmse(&[], &truth).is_err());
        assert!(rmse(&[Positions::zeros(3, 2)], &truth).is_err());
    }

    #[test]
    fn seeds_depend_on_every_path_element() {
        let base = derive_seed(7, &[1, 0, 0]);
        assert_eq!(base, derive_seed(7, &[1, 0, 0]));
        assert_ne!(base, derive_seed(8, &[1, 0, 0]));
        assert_ne!(base, derive_seed(7, &[1, 1, 0]));
        assert_ne!(base, derive_seed(7, &[1, 0, 1]));
        assert_ne!(derive_seed(7, &[2, 0, 0, 0]), derive_seed(7, &[2, 0, 0, 1]));
    }

    #[test]
    fn config_validation() {
        let config = ExperimentConfig {
            network: NetworkSource::Geometric {
                params: GeometricParams { n: 5, p: 2, radius: 0.7, anchors_at_corners: true, random_anchors: 0 },
                seed: 1,
            },
            noise_sigmas: vec![0.1],
            trials: 1,
            solvers: vec![SolverConfig { solver: SolverKind::Parallel, options: SolverOptions::default() }],
            master_seed: 0,
        };
        assert!(config.validate().is_ok());
        assert!(ExperimentConfig { trials: 0, ..config.clone() }.validate().is_err());
        assert!(ExperimentConfig { noise_sigmas: vec![-1.0], ..config.clone() }.validate().is_err());
        assert!(ExperimentConfig { solvers: vec![], ..config }.validate().is_err());
    }
}
