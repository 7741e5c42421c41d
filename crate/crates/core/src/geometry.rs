//! Euclidean balls and the squared-distance functions built on them.
//!
//! A range measurement `d` between two points is a sphere constraint
//! `‖z‖ = d`. Its squared distance `½ (‖z‖ - d)²` is nonconvex; replacing the
//! sphere by the enclosing ball gives `½ max(0, ‖z‖ - d)²`, which is convex,
//! differentiable and has a 1-Lipschitz gradient `z - P(z)`.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// A position in `R^p`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Point {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl From<&[f64]> for Point {
    fn from(v: &[f64]) -> Self {
        Point(v.to_vec())
    }
}

/// Closed Euclidean ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    center: Point,
    radius: f64,
}

impl Ball {
    pub fn new(center: impl Into<Point>, radius: f64) -> Result<Self> {
        let center = center.into();
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("ball radius must be finite and nonnegative, got {radius}")));
        }
        if !center.is_finite() {
            return Err(Error::InvalidArgument("ball center must be finite".into()));
        }
        Ok(Ball { center, radius })
    }

    /// Ball of the given radius around the origin of `R^dim`.
    pub fn centered(dim: usize, radius: f64) -> Result<Self> {
        Ball::new(Point::zeros(dim), radius)
    }

    pub fn center(&self) -> &Point {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        distance(z, &self.center) <= self.radius
    }
}

/// Orthogonal projection of `z` onto `b`.
pub fn project_ball(z: &[f64], b: &Ball) -> Result<Point> {
    check_dim(b.dim(), z.len())?;
    let norm = distance(z, &b.center);
    if norm <= b.radius {
        return Ok(Point::from(z));
    }
    let scale = b.radius / norm;
    Ok(z.iter().zip(b.center.iter()).map(|(zi, ci)| ci + scale * (zi - ci)).collect::<Vec<_>>().into())
}

/// `½ d²(z, b)`: half the squared distance from `z` to the ball.
pub fn phi_ball(z: &[f64], b: &Ball) -> Result<f64> {
    check_dim(b.dim(), z.len())?;
    Ok(half_sq_excess(distance(z, &b.center), b.radius))
}

/// `½ (‖z - c‖ - r)²`: half the squared distance from `z` to the sphere bounding `b`.
pub fn phi_sphere(z: &[f64], b: &Ball) -> Result<f64> {
    check_dim(b.dim(), z.len())?;
    let gap = distance(z, &b.center) - b.radius;
    Ok(0.5 * gap * gap)
}

/// Gradient of [`phi_ball`], equal to `z - project_ball(z, b)`.
pub fn grad_phi_ball(z: &[f64], b: &Ball) -> Result<Point> {
    check_dim(b.dim(), z.len())?;
    let mut out = Point::zeros(z.len());
    let scale = gradient_scale(distance(z, &b.center), b.radius);
    for ((o, zi), ci) in out.iter_mut().zip(z).zip(b.center.iter()) {
        *o = scale * (zi - ci);
    }
    Ok(out)
}

#[inline]
pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `½ max(0, dist - radius)²`.
#[inline]
pub(crate) fn half_sq_excess(dist: f64, radius: f64) -> f64 {
    let excess = dist - radius;
    if excess > 0.0 {
        0.5 * excess * excess
    } else {
        0.0
    }
}

/// Factor `s` with `z - P(z) = s (z - c)`: zero inside the ball, `1 - r/‖z - c‖` outside.
#[inline]
pub(crate) fn gradient_scale(dist: f64, radius: f64) -> f64 {
    if dist > radius {
        1.0 - radius / dist
    } else {
        0.0
    }
}
