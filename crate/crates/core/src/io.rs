//! Text exports. Every writer is a pure function of its input, so reruns
//! produce byte-identical files.

use std::fmt::Write as _;

use serde::Serialize;

use crate::simulator::{Aggregate, ExperimentResult, TrialFailure};
use crate::solvers::SolverTrace;

pub const TRACE_HEADER: &str = "k,fhat,grad_norm,broadcasts_per_sensor";
pub const EXPERIMENT_HEADER: &str =
    "solver,sigma,trial,rmse_contrib,fhat_final,f_final,tight_bound,apriori_bound,broadcasts";

/// One row per iteration `k ≥ 1`; the initialization is not a row.
pub fn trace_csv(trace: &SolverTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in trace.records.iter().filter(|r| r.k >= 1) {
        let _ = writeln!(out, "{},{},{},{}", r.k, r.fhat, r.grad_norm, trace.mean_broadcasts(r));
    }
    out
}

/// Long-format per-trial rows ordered by `(σ, trial, solver)`.
pub fn experiment_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(EXPERIMENT_HEADER);
    out.push('\n');
    for r in &result.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.solver,
            r.sigma,
            r.trial,
            r.squared_error,
            r.fhat_final,
            r.f_final,
            r.tight_bound,
            r.apriori_bound,
            r.broadcasts
        );
    }
    out
}

#[derive(Serialize)]
struct Summary<'a> {
    sensors: usize,
    average_degree: f64,
    completed_trials: usize,
    aggregates: &'a [Aggregate],
    failures: &'a [TrialFailure],
}

pub fn experiment_summary_json(result: &ExperimentResult) -> String {
    to_json(&Summary {
        sensors: result.sensors,
        average_degree: result.average_degree,
        completed_trials: result.records.len(),
        aggregates: &result.aggregates,
        failures: &result.failures,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory JSON serialization");
    s.push('\n');
    s
}
