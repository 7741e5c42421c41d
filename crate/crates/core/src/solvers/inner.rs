use crate::cost::SingleSource;
use crate::error::{check_dim, Error, Result};
use crate::geometry::{norm, Point};

use super::{nesterov_weight, SolverOptions};

/// Result of a per-node minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    /// Lowest-cost iterate visited, never worse than the start.
    pub point: Point,
    pub value: f64,
    pub iterations: usize,
    /// Gradient norm at `point`.
    pub gradient_norm: f64,
}

/// Minimizes a single-source slice with Nesterov's method and step `1/L`.
///
/// `lipschitz` is the step constant (the global `L_f̂` in the asynchronous
/// solver); it must dominate the slice's own constant for the step to be
/// safe. Stops when the gradient norm falls to `opts.inner_gradient_tolerance`
/// or after `opts.inner_max_iterations` iterations. When `proximal` is given
/// as `(μ, c)`, the term `μ/2 ‖z - c‖²` is added to the objective.
pub fn solve_single_source(
    slice: &SingleSource,
    lipschitz: f64,
    opts: &SolverOptions,
    start: &[f64],
    proximal: Option<(f64, &[f64])>,
) -> Result<InnerSolution> {
    check_dim(slice.dim(), start.len())?;
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::InvalidArgument(format!("step constant must be positive, got {lipschitz}")));
    }
    if let Some((mu, center)) = proximal {
        check_dim(slice.dim(), center.len())?;
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidArgument(format!("proximal weight must be nonnegative, got {mu}")));
        }
    }
    let weighting = opts.slice_weighting;
    let mu = proximal.map_or(0.0, |(m, _)| m);
    let step = 1.0 / (lipschitz + mu);
    let dim = slice.dim();

    let objective = |z: &[f64]| {
        let mut v = slice.value(z, weighting);
        if let Some((mu, c)) = proximal {
            v += 0.5 * mu * crate::geometry::distance(z, c).powi(2);
        }
        v
    };
    let gradient = |z: &[f64], out: &mut [f64]| {
        slice.gradient_into(z, weighting, out);
        if let Some((mu, c)) = proximal {
            for ((o, zi), ci) in out.iter_mut().zip(z).zip(c) {
                *o += mu * (zi - ci);
            }
        }
    };

    let mut g = vec![0.0; dim];
    gradient(start, &mut g);
    let mut best =
        InnerSolution { point: Point::from(start), value: objective(start), iterations: 0, gradient_norm: norm(&g) };
    if best.gradient_norm <= opts.inner_gradient_tolerance {
        return Ok(best);
    }

    let mut z = start.to_vec();
    let mut z_prev = start.to_vec();
    let mut w = vec![0.0; dim];
    for l in 1..=opts.inner_max_iterations {
        let beta = nesterov_weight(l)?;
        for ((wv, a), b) in w.iter_mut().zip(&z).zip(&z_prev) {
            *wv = a + beta * (a - b);
        }
        gradient(&w, &mut g);
        std::mem::swap(&mut z, &mut z_prev);
        for ((zv, wv), gv) in z.iter_mut().zip(&w).zip(&g) {
            *zv = wv - step * gv;
        }

        gradient(&z, &mut g);
        let gradient_norm = norm(&g);
        let value = objective(&z);
        if value < best.value || (value == best.value && gradient_norm < best.gradient_norm) {
            best = InnerSolution { point: Point::from(z.as_slice()), value, iterations: l, gradient_norm };
        } else {
            best.iterations = l;
        }
        if gradient_norm <= opts.inner_gradient_tolerance {
            break;
        }
    }
    Ok(best)
}
