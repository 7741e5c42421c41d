//! Cooperative sensor network localization through convex relaxation of the
//! range-only maximum-likelihood cost.
//!
//! Sensors with unknown positions measure noisy distances to neighbors and to
//! a few anchors. Replacing each sphere constraint by its enclosing ball gives
//! a convex underestimator `f̂` of the nonconvex cost `f`, which is minimized
//! by a synchronous accelerated method or by asynchronous block updates.

pub mod cost;
pub mod error;
pub mod geometry;
pub mod io;
pub mod network;
pub mod positions;
pub mod simulator;
pub mod solvers;

pub use cost::{
    eval_f, eval_fhat, eval_slice, gap_certificate, grad_fhat, grad_fhat_node, grad_slice, CostReport, EdgeWeighting,
    GapCertificate, SingleSource, SLACK_TOLERANCE,
};
pub use error::{Error, Result};
pub use geometry::{grad_phi_ball, phi_ball, phi_sphere, project_ball, Ball, Point};
pub use network::{
    calibrate_radius, corner_anchors, generate_geometric, generate_with_average_degree, incidence_apply,
    incidence_transpose_apply, laplacian_apply, symmetrize_measurements, validate, AnchorLink, EdgeVector,
    GeometricParams, Neighbor, Problem, ProblemData, Topology,
};
pub use positions::Positions;
pub use simulator::{
    derive_seed, gen_measurements, rmse, run_experiment, ExperimentConfig, ExperimentResult, Measurements,
    NetworkSource, SolverConfig,
};
pub use solvers::{
    solve, solve_async_exact, solve_async_inexact, solve_parallel, solve_single_source, ActivationSequence, InitRule,
    InnerInit, IterationRecord, LipschitzBound, SolverKind, SolverOptions, SolverTrace, StopRule, Termination,
};
