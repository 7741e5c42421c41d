use rayon::prelude::*;

use super::{initial_termination, Recorder, SolverOptions, SolverTrace, StopRule, Termination};
use crate::cost::{fhat_value, gradient_into, node_gradient_into};
use crate::error::{Error, Result};
use crate::network::Problem;
use crate::positions::Positions;

/// Extrapolation weight `(k - 2) / (k + 1)` of iteration `k ≥ 1`.
pub fn nesterov_weight(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("Nesterov weights start at k = 1".into()));
    }
    Ok((k as f64 - 2.0) / (k as f64 + 1.0))
}

/// Synchronous accelerated gradient method with step `1/L_f̂`.
///
/// Per iteration every sensor extrapolates `w_i`, broadcasts it once, and
/// steps along its block of `∇f̂(w)`. Node blocks are merged by index, so
/// `node_parallel` never changes the result.
pub fn solve_parallel(problem: &Problem, opts: &SolverOptions) -> Result<SolverTrace> {
    opts.validate()?;
    let n = problem.sensor_count();
    let dim = problem.dim();
    let step = 1.0 / opts.lipschitz(problem);

    let mut x = opts.initial_point(problem)?;
    let mut x_prev = x.clone();
    let mut w = Positions::zeros(n, dim);
    let mut grad = Positions::zeros(n, dim);

    gradient_into(problem, &x, &mut grad);
    let mut grad_norm = grad.norm();
    let mut recorder = Recorder::new(opts, &x, fhat_value(problem, &x), grad_norm);
    if let Some(t) = initial_termination(opts, grad_norm) {
        return Ok(recorder.finish(x, t));
    }

    for k in 1..=opts.max_iterations {
        let beta = nesterov_weight(k)?;
        for ((wv, a), b) in w.as_mut_slice().iter_mut().zip(x.as_slice()).zip(x_prev.as_slice()) {
            *wv = a + beta * (a - b);
        }
        recorder.broadcast_all();

        node_gradients(problem, &w, &mut grad, opts.node_parallel);
        std::mem::swap(&mut x, &mut x_prev);
        for ((xv, wv), g) in x.as_mut_slice().iter_mut().zip(w.as_slice()).zip(grad.as_slice()) {
            *xv = wv - step * g;
        }
        if !x.is_finite() {
            return Err(Error::NumericalDivergence { iteration: k });
        }

        node_gradients(problem, &x, &mut grad, opts.node_parallel);
        grad_norm = grad.norm();
        recorder.push(k, &x, fhat_value(problem, &x), grad_norm, None);

        let done = match opts.stop_rule {
            StopRule::GradientNorm => (grad_norm <= opts.gradient_tolerance).then_some(Termination::GradientNorm),
            StopRule::RelativeImprovement => (x.distance(&x_prev) <= opts.relative_tolerance * x_prev.norm())
                .then_some(Termination::RelativeImprovement),
            StopRule::FixedIterations => (k == opts.max_iterations).then_some(Termination::FixedIterations),
        };
        if let Some(t) = done {
            return Ok(recorder.finish(x, t));
        }
    }
    Ok(recorder.finish(x, Termination::IterationBudget))
}

fn node_gradients(problem: &Problem, x: &Positions, out: &mut Positions, parallel: bool) {
    if parallel {
        let dim = problem.dim();
        out.as_mut_slice()
            .par_chunks_mut(dim)
            .enumerate()
            .for_each(|(i, block)| node_gradient_into(problem, x, i, block));
    } else {
        gradient_into(problem, x, out);
    }
}
