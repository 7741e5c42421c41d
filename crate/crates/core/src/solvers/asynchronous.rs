use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    initial_termination, solve_single_source, stream_rng, InnerInit, Recorder, SolverOptions, SolverTrace, StopRule,
    Termination, ACTIVATION_STREAM, INNER_STREAM,
};
use crate::cost::{fhat_value, gradient_into, node_gradient_into, SingleSource};
use crate::error::{Error, Result};
use crate::network::Problem;
use crate::positions::Positions;

/// Reproducible stream of activated sensors `ξ_1, ξ_2, ...` with
/// `P(ξ_k = i) = P_i > 0`.
///
/// Poisson clocks at the sensors produce the same sequence law as these
/// i.i.d. categorical draws, so the schedule is pre-drawn from a seed.
#[derive(Debug, Clone)]
pub struct ActivationSequence {
    probabilities: Vec<f64>,
    sampler: Sampler,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
enum Sampler {
    Uniform(usize),
    Weighted(WeightedIndex<f64>),
}

impl ActivationSequence {
    pub fn uniform(n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("activation needs at least one sensor".into()));
        }
        Ok(ActivationSequence {
            probabilities: vec![1.0 / n as f64; n],
            sampler: Sampler::Uniform(n),
            rng: stream_rng(seed, ACTIVATION_STREAM),
        })
    }

    /// Probabilities must be positive and sum to one (within `1e-9`).
    pub fn with_probabilities(probabilities: Vec<f64>, seed: u64) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::InvalidArgument("activation needs at least one sensor".into()));
        }
        if let Some((i, p)) = probabilities.iter().enumerate().find(|(_, p)| !(**p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "activation probability of sensor {i} must be positive, got {p}"
            )));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("activation probabilities sum to {total}, not 1")));
        }
        let index = WeightedIndex::new(&probabilities).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(ActivationSequence {
            probabilities,
            sampler: Sampler::Weighted(index),
            rng: stream_rng(seed, ACTIVATION_STREAM),
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn sensor_count(&self) -> usize {
        self.probabilities.len()
    }
}

impl Iterator for ActivationSequence {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        Some(match &self.sampler {
            Sampler::Uniform(n) => self.rng.random_range(0..*n),
            Sampler::Weighted(w) => w.sample(&mut self.rng),
        })
    }
}

/// Asynchronous block minimization: at tick `k` only sensor `ξ_k` moves, to
/// the minimizer of `f̂` over its own position (computed by
/// [`solve_single_source`]) and broadcasts the result once.
///
/// An inner solve that fails to lower `f̂` is discarded, so the cost trace is
/// nonincreasing.
pub fn solve_async_exact(
    problem: &Problem,
    activation: ActivationSequence,
    opts: &SolverOptions,
) -> Result<SolverTrace> {
    opts.validate()?;
    if activation.sensor_count() != problem.sensor_count() {
        return Err(Error::InvalidArgument(format!(
            "activation covers {} sensors, problem has {}",
            activation.sensor_count(),
            problem.sensor_count()
        )));
    }
    let lipschitz = opts.lipschitz(problem);
    let mut inner_rng = stream_rng(opts.rng_seed, INNER_STREAM);

    run_async(problem, activation, opts, |x, i| {
        let slice = SingleSource::from_positions(problem, x, i);
        let current = x.node(i).to_vec();
        let start = match opts.inner_init {
            InnerInit::WarmStart => current.clone(),
            InnerInit::Random => (0..problem.dim()).map(|_| inner_rng.random::<f64>()).collect(),
        };
        let proximal = (opts.proximal_weight > 0.0).then_some((opts.proximal_weight, current.as_slice()));
        let sol = solve_single_source(&slice, lipschitz, opts, &start, proximal)?;
        x.node_mut(i).copy_from_slice(&sol.point);
        Ok(Some(current))
    })
}

/// Asynchronous single-gradient-step variant with uniform activation:
/// `x_i ← x_i - (1/L_f̂) ∇_i f̂(x)`.
pub fn solve_async_inexact(problem: &Problem, opts: &SolverOptions) -> Result<SolverTrace> {
    opts.validate()?;
    let step = 1.0 / opts.lipschitz(problem);
    let activation = ActivationSequence::uniform(problem.sensor_count(), opts.rng_seed)?;
    let mut block = vec![0.0; problem.dim()];
    run_async(problem, activation, opts, |x, i| {
        node_gradient_into(problem, x, i, &mut block);
        for (xv, g) in x.node_mut(i).iter_mut().zip(&block) {
            *xv -= step * g;
        }
        Ok(None)
    })
}

/// Shared asynchronous outer loop. `update` moves sensor `i` in place and may
/// return its previous position, in which case the move is reverted when it
/// would increase `f̂`.
fn run_async(
    problem: &Problem,
    activation: ActivationSequence,
    opts: &SolverOptions,
    mut update: impl FnMut(&mut Positions, usize) -> Result<Option<Vec<f64>>>,
) -> Result<SolverTrace> {
    let n = problem.sensor_count();
    let mut x = opts.initial_point(problem)?;
    let mut grad = Positions::zeros(n, problem.dim());
    gradient_into(problem, &x, &mut grad);
    let mut fhat = fhat_value(problem, &x);
    let mut recorder = Recorder::new(opts, &x, fhat, grad.norm());
    if let Some(t) = initial_termination(opts, grad.norm()) {
        return Ok(recorder.finish(x, t));
    }
    let mut sweep_start = x.clone();

    for (k, i) in (1..=opts.max_iterations).zip(activation) {
        let previous = update(&mut x, i)?;
        if !x.is_finite() {
            return Err(Error::NumericalDivergence { iteration: k });
        }
        let mut candidate = fhat_value(problem, &x);
        if let Some(prev) = previous {
            if candidate > fhat {
                x.node_mut(i).copy_from_slice(&prev);
                candidate = fhat;
            }
        }
        fhat = candidate;
        recorder.broadcast(i);

        gradient_into(problem, &x, &mut grad);
        let grad_norm = grad.norm();
        recorder.push(k, &x, fhat, grad_norm, Some(i));

        let done = match opts.stop_rule {
            StopRule::GradientNorm => (grad_norm <= opts.gradient_tolerance).then_some(Termination::GradientNorm),
            StopRule::RelativeImprovement => {
                if k % n == 0 {
                    let moved = x.distance(&sweep_start) <= opts.relative_tolerance * sweep_start.norm();
                    sweep_start.clone_from(&x);
                    moved.then_some(Termination::RelativeImprovement)
                } else {
                    None
                }
            }
            StopRule::FixedIterations => (k == opts.max_iterations).then_some(Termination::FixedIterations),
        };
        if let Some(t) = done {
            return Ok(recorder.finish(x, t));
        }
    }
    Ok(recorder.finish(x, Termination::IterationBudget))
}
