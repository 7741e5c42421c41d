//! Minimizers of the relaxed cost.
//!
//! * [`solve_parallel`]: every sensor takes a Nesterov-accelerated gradient
//!   step per iteration, exchanging its extrapolated point with neighbors.
//! * [`solve_async_exact`]: one randomly activated sensor per tick minimizes
//!   the cost over its own position with [`solve_single_source`].
//! * [`solve_async_inexact`]: one uniformly activated sensor per tick takes a
//!   single gradient step on its block.

mod asynchronous;
mod inner;
mod parallel;

pub use asynchronous::{solve_async_exact, solve_async_inexact, ActivationSequence};
pub use inner::{solve_single_source, InnerSolution};
pub use parallel::{nesterov_weight, solve_parallel};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::EdgeWeighting;
use crate::error::{Error, Result};
use crate::network::Problem;
use crate::positions::Positions;

/// RNG streams derived from a solver seed.
pub(crate) const INIT_STREAM: u64 = 0;
pub(crate) const ACTIVATION_STREAM: u64 = 1;
pub(crate) const INNER_STREAM: u64 = 2;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Parallel,
    AsyncExact,
    AsyncInexact,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Parallel => "parallel",
            SolverKind::AsyncExact => "async-exact",
            SolverKind::AsyncInexact => "async-inexact",
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// Stop once `‖∇f̂(x(k))‖ ≤ gradient_tolerance`.
    #[default]
    GradientNorm,
    /// Stop once `‖x(k) - x(k')‖ ≤ relative_tolerance · ‖x(k')‖`, where `k'`
    /// is the previous iteration (parallel) or the tick one sweep of `n`
    /// activations earlier (asynchronous).
    RelativeImprovement,
    /// Run exactly `max_iterations` iterations.
    FixedIterations,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "kebab-case")]
pub enum InitRule {
    /// Each sensor draws its start uniformly in the unit box.
    #[default]
    UniformUnitBox,
    Given(Positions),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "kebab-case")]
pub enum InnerInit {
    /// Start the per-node solve from the sensor's current estimate.
    #[default]
    WarmStart,
    /// Start from a fresh uniform draw in the unit box.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "kebab-case")]
pub enum LipschitzBound {
    /// `2 δ_max + max |A_i|`.
    #[default]
    Degree,
    /// Common-neighbor bound on the Laplacian spectrum plus `max |A_i|`.
    CommonNeighbor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub stop_rule: StopRule,
    pub gradient_tolerance: f64,
    pub relative_tolerance: f64,
    pub inner_max_iterations: usize,
    pub inner_gradient_tolerance: f64,
    pub init: InitRule,
    pub rng_seed: u64,
    pub inner_init: InnerInit,
    pub slice_weighting: EdgeWeighting,
    /// Weight `μ` of the proximal term `μ/2 ‖z - x_i(k-1)‖²` added to the
    /// per-node problem of the exact asynchronous solver. Zero disables it.
    pub proximal_weight: f64,
    pub lipschitz_bound: LipschitzBound,
    /// Activation probabilities for the exact asynchronous solver; uniform when absent.
    pub activation_probabilities: Option<Vec<f64>>,
    /// Keep every iterate in the trace.
    pub record_iterates: bool,
    /// Compute per-node gradients of the parallel solver on the rayon pool.
    pub node_parallel: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 100_000,
            stop_rule: StopRule::GradientNorm,
            gradient_tolerance: 1e-6,
            relative_tolerance: 1e-6,
            inner_max_iterations: 200,
            inner_gradient_tolerance: 1e-9,
            init: InitRule::UniformUnitBox,
            rng_seed: 0,
            inner_init: InnerInit::WarmStart,
            slice_weighting: EdgeWeighting::Block,
            proximal_weight: 0.0,
            lipschitz_bound: LipschitzBound::Degree,
            activation_probabilities: None,
            record_iterates: false,
            node_parallel: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        positive(self.gradient_tolerance, "gradient_tolerance")?;
        positive(self.relative_tolerance, "relative_tolerance")?;
        positive(self.inner_gradient_tolerance, "inner_gradient_tolerance")?;
        if self.max_iterations == 0 || self.inner_max_iterations == 0 {
            return Err(Error::InvalidArgument("iteration counts must be at least 1".into()));
        }
        if !(self.proximal_weight >= 0.0 && self.proximal_weight.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "proximal_weight must be nonnegative, got {}",
                self.proximal_weight
            )));
        }
        Ok(())
    }

    pub(crate) fn lipschitz(&self, problem: &Problem) -> f64 {
        match self.lipschitz_bound {
            LipschitzBound::Degree => problem.lipschitz_fhat(),
            LipschitzBound::CommonNeighbor => problem.lipschitz_fhat_common_neighbor(),
        }
    }

    pub(crate) fn initial_point(&self, problem: &Problem) -> Result<Positions> {
        match &self.init {
            InitRule::UniformUnitBox => {
                let mut rng = stream_rng(self.rng_seed, INIT_STREAM);
                let coords = (0..problem.sensor_count() * problem.dim()).map(|_| rng.random::<f64>()).collect();
                Positions::from_flat(problem.dim(), coords)
            }
            InitRule::Given(x) => {
                problem.check_positions(x)?;
                if !x.is_finite() {
                    return Err(Error::InvalidArgument("initial positions must be finite".into()));
                }
                Ok(x.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientNorm,
    RelativeImprovement,
    FixedIterations,
    /// `max_iterations` reached before the stop rule was met.
    IterationBudget,
}

impl Termination {
    pub fn converged(self) -> bool {
        self != Termination::IterationBudget
    }

    pub fn name(self) -> &'static str {
        match self {
            Termination::GradientNorm => "gradient-norm",
            Termination::RelativeImprovement => "relative-improvement",
            Termination::FixedIterations => "fixed-iterations",
            Termination::IterationBudget => "iteration-budget",
        }
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// State after iteration `k` (`k = 0` is the initialization).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub fhat: f64,
    pub grad_norm: f64,
    /// Broadcasts summed over all sensors up to and including iteration `k`.
    pub broadcasts: u64,
    /// Sensor activated at this tick (asynchronous solvers only).
    pub active_sensor: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    /// Records for `k = 0, 1, ..., K`.
    pub records: Vec<IterationRecord>,
    /// `x(0), ..., x(K)` when iterates were recorded, otherwise empty.
    pub iterates: Vec<Positions>,
    pub estimate: Positions,
    pub termination: Termination,
    /// Cumulative broadcasts of each sensor at the end of the run.
    pub broadcasts_per_sensor: Vec<u64>,
}

impl SolverTrace {
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.k)
    }

    pub fn final_record(&self) -> &IterationRecord {
        self.records.last().expect("trace always holds the initial record")
    }

    pub fn final_fhat(&self) -> f64 {
        self.final_record().fhat
    }

    /// Average broadcasts per sensor after the given record.
    pub fn mean_broadcasts(&self, record: &IterationRecord) -> f64 {
        record.broadcasts as f64 / self.broadcasts_per_sensor.len() as f64
    }
}

/// Runs the chosen solver; the exact asynchronous solver draws its
/// activations from `opts.activation_probabilities` (uniform when absent).
pub fn solve(problem: &Problem, kind: SolverKind, opts: &SolverOptions) -> Result<SolverTrace> {
    match kind {
        SolverKind::Parallel => solve_parallel(problem, opts),
        SolverKind::AsyncExact => {
            let activation = match &opts.activation_probabilities {
                Some(p) => ActivationSequence::with_probabilities(p.clone(), opts.rng_seed)?,
                None => ActivationSequence::uniform(problem.sensor_count(), opts.rng_seed)?,
            };
            solve_async_exact(problem, activation, opts)
        }
        SolverKind::AsyncInexact => solve_async_inexact(problem, opts),
    }
}

/// Bookkeeping shared by all outer loops.
pub(crate) struct Recorder {
    records: Vec<IterationRecord>,
    iterates: Vec<Positions>,
    keep_iterates: bool,
    broadcasts: Vec<u64>,
    total: u64,
}

impl Recorder {
    pub(crate) fn new(opts: &SolverOptions, x0: &Positions, fhat: f64, grad_norm: f64) -> Self {
        let n = x0.len();
        let mut rec = Recorder {
            records: Vec::new(),
            iterates: Vec::new(),
            keep_iterates: opts.record_iterates,
            broadcasts: vec![0; n],
            total: 0,
        };
        rec.push(0, x0, fhat, grad_norm, None);
        rec
    }

    pub(crate) fn broadcast_all(&mut self) {
        for b in &mut self.broadcasts {
            *b += 1;
        }
        self.total += self.broadcasts.len() as u64;
    }

    pub(crate) fn broadcast(&mut self, i: usize) {
        self.broadcasts[i] += 1;
        self.total += 1;
    }

    pub(crate) fn push(&mut self, k: usize, x: &Positions, fhat: f64, grad_norm: f64, active_sensor: Option<usize>) {
        self.records.push(IterationRecord { k, fhat, grad_norm, broadcasts: self.total, active_sensor });
        if self.keep_iterates {
            self.iterates.push(x.clone());
        }
    }

    pub(crate) fn finish(self, estimate: Positions, termination: Termination) -> SolverTrace {
        SolverTrace {
            records: self.records,
            iterates: self.iterates,
            estimate,
            termination,
            broadcasts_per_sensor: self.broadcasts,
        }
    }
}

pub(crate) fn initial_termination(opts: &SolverOptions, grad_norm: f64) -> Option<Termination> {
    (opts.stop_rule == StopRule::GradientNorm && grad_norm <= opts.gradient_tolerance)
        .then_some(Termination::GradientNorm)
}
