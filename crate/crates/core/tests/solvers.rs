mod common;

use common::{network1, rng};
use locnet_core::{
    grad_fhat, grad_fhat_node, solve, solve_async_exact, solve_async_inexact, solve_parallel, solve_single_source,
    ActivationSequence, EdgeWeighting, Point, Problem, SingleSource, SolverKind, SolverOptions, SolverTrace, StopRule,
    Termination,
};
use rand::Rng;

fn reference(problem: &Problem, iterations: usize) -> SolverTrace {
    let opts = SolverOptions {
        stop_rule: StopRule::FixedIterations,
        max_iterations: iterations,
        rng_seed: 99,
        ..Default::default()
    };
    solve_parallel(problem, &opts).unwrap()
}

/// Grid search with step 0.01 followed by compass search from the best cells.
fn grid_and_polish(slice: &SingleSource) -> f64 {
    let f = |z: &[f64]| slice.value(z, EdgeWeighting::Block);
    let mut cells: Vec<(f64, [f64; 2])> = Vec::new();
    for a in 0..=400 {
        for b in 0..=400 {
            let z = [-1.5 + a as f64 * 0.01, -1.5 + b as f64 * 0.01];
            cells.push((f(&z), z));
        }
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = f64::INFINITY;
    for &(mut v, mut z) in cells.iter().take(5) {
        let mut h = 0.01;
        while h > 1e-12 {
            let mut moved = false;
            for (dx, dy) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h), (h, h), (-h, -h), (h, -h), (-h, h)] {
                let cand = [z[0] + dx, z[1] + dy];
                let fc = f(&cand);
                if fc < v {
                    v = fc;
                    z = cand;
                    moved = true;
                }
            }
            if !moved {
                h *= 0.5;
            }
        }
        best = best.min(v);
    }
    best
}

#[test]
fn inner_solver_matches_grid_search() {
    let mut r = rng(20);
    for _ in 0..10 {
        let point =
            |r: &mut rand_chacha::ChaCha8Rng| Point::from(vec![r.random_range(0.0..1.0), r.random_range(0.0..1.0)]);
        let neighbors = (0..r.random_range(1..5)).map(|_| (point(&mut r), r.random_range(0.05..0.6))).collect();
        let anchors = (0..r.random_range(1..3)).map(|_| (point(&mut r), r.random_range(0.05..0.6))).collect();
        let slice = SingleSource::new(2, neighbors, anchors).unwrap();
        let opts = SolverOptions { inner_max_iterations: 5000, inner_gradient_tolerance: 1e-10, ..Default::default() };
        let start = [r.random_range(0.0..1.0), r.random_range(0.0..1.0)];
        let sol = solve_single_source(&slice, slice.lipschitz(EdgeWeighting::Block), &opts, &start, None).unwrap();
        let oracle = grid_and_polish(&slice);
        assert!((sol.value - oracle).abs() <= 1e-6, "{} vs {oracle}", sol.value);
    }
}

#[test]
fn async_exact_trace_is_nonincreasing() {
    for seed in 0..20 {
        let (_, problem) = network1(seed, 0.05);
        let opts = SolverOptions {
            stop_rule: StopRule::FixedIterations,
            max_iterations: 500,
            rng_seed: seed,
            ..Default::default()
        };
        let trace = solve_async_exact(&problem, ActivationSequence::uniform(10, seed).unwrap(), &opts).unwrap();
        for w in trace.records.windows(2) {
            assert!(w[1].fhat <= w[0].fhat, "seed {seed}: {} > {}", w[1].fhat, w[0].fhat);
        }
    }
}

#[test]
fn async_exact_accepts_nonuniform_activation() {
    let (_, problem) = network1(4, 0.05);
    let mut p = vec![0.05; 10];
    p[0] = 0.55;
    let opts = SolverOptions { activation_probabilities: Some(p), max_iterations: 200_000, ..Default::default() };
    let trace = solve(&problem, SolverKind::AsyncExact, &opts).unwrap();
    assert!(trace.termination.converged());
    assert!(trace.broadcasts_per_sensor[0] > trace.broadcasts_per_sensor[1]);
}

#[test]
fn async_inexact_obeys_descent_lemma() {
    for seed in 0..20 {
        let (_, problem) = network1(seed, 0.05);
        let l = problem.lipschitz_fhat();
        let opts = SolverOptions {
            stop_rule: StopRule::FixedIterations,
            max_iterations: 500,
            rng_seed: seed,
            record_iterates: true,
            ..Default::default()
        };
        let trace = solve_async_inexact(&problem, &opts).unwrap();
        for k in 1..trace.records.len() {
            let i = trace.records[k].active_sensor.unwrap();
            let block = grad_fhat_node(&problem, &trace.iterates[k - 1], i).unwrap();
            let sq: f64 = block.0.iter().map(|v| v * v).sum();
            assert!(trace.records[k].fhat <= trace.records[k - 1].fhat - sq / (2.0 * l) + 1e-12);
        }
    }
}

#[test]
fn solvers_agree_on_final_cost() {
    for seed in 0..10 {
        let (_, problem) = network1(seed + 100, 0.05);
        let opts = SolverOptions { rng_seed: seed, max_iterations: 1_000_000, ..Default::default() };
        let finals: Vec<f64> = [SolverKind::Parallel, SolverKind::AsyncExact, SolverKind::AsyncInexact]
            .iter()
            .map(|&kind| {
                let t = solve(&problem, kind, &opts).unwrap();
                assert!(t.termination.converged(), "{kind} seed {seed}");
                t.final_fhat()
            })
            .collect();
        let spread = finals.iter().cloned().fold(f64::MIN, f64::max) - finals.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread <= 1e-5, "seed {seed}: {finals:?}");
    }
}

#[test]
fn gradient_vanishes_along_async_runs() {
    for seed in 0..3 {
        let (_, problem) = network1(seed, 0.1);
        let opts = SolverOptions {
            stop_rule: StopRule::FixedIterations,
            max_iterations: 100_000,
            rng_seed: seed,
            ..Default::default()
        };
        for kind in [SolverKind::AsyncExact, SolverKind::AsyncInexact] {
            let trace = solve(&problem, kind, &opts).unwrap();
            let min = trace.records.iter().map(|r| r.grad_norm).fold(f64::INFINITY, f64::min);
            assert!(min <= 1e-4, "{kind}: {min}");
        }
    }
}

#[test]
fn async_inexact_suboptimality_halves_with_iterations() {
    let (_, problem) = network1(11, 0.05);
    let fstar = reference(&problem, 200_000).final_fhat();
    let seeds = 32;
    let mut avg = [0.0f64; 4];
    let checkpoints = [200, 400, 800, 1600];
    for seed in 0..seeds {
        let opts = SolverOptions {
            stop_rule: StopRule::FixedIterations,
            max_iterations: 1600,
            rng_seed: seed,
            ..Default::default()
        };
        let trace = solve_async_inexact(&problem, &opts).unwrap();
        for (a, &k) in avg.iter_mut().zip(&checkpoints) {
            *a += (trace.records[k].fhat - fstar) / seeds as f64;
        }
    }
    for w in avg.windows(2) {
        assert!(w[1] <= 0.75 * w[0], "{avg:?}");
    }
    assert!(avg[3] > 1e-9, "window reaches the reference floor: {avg:?}");
}

#[test]
fn parallel_meets_accelerated_rate() {
    for seed in [0, 5] {
        let (_, problem) = network1(seed, 0.05);
        let reference = reference(&problem, 200_000);
        let fstar = reference.final_fhat();
        let l = problem.lipschitz_fhat();
        let opts = SolverOptions {
            stop_rule: StopRule::FixedIterations,
            max_iterations: 5000,
            rng_seed: seed,
            record_iterates: true,
            ..Default::default()
        };
        let trace = solve_parallel(&problem, &opts).unwrap();
        let r0 = trace.iterates[0].distance(&reference.estimate).powi(2);
        for rec in &trace.records {
            let bound = 2.0 * l * r0 / ((rec.k + 1) as f64).powi(2);
            assert!(rec.fhat - fstar <= bound + 1e-12, "k = {}", rec.k);
        }
    }
}

#[test]
fn async_inexact_tail_settles() {
    for seed in 0..20 {
        let (_, problem) = network1(seed, 0.05);
        let opts = SolverOptions {
            stop_rule: StopRule::FixedIterations,
            max_iterations: 20_000,
            rng_seed: seed,
            record_iterates: true,
            ..Default::default()
        };
        let trace = solve_async_inexact(&problem, &opts).unwrap();
        let tail = &trace.iterates[trace.iterates.len() * 9 / 10..];
        let d: Vec<f64> = tail.iter().map(|x| x.distance(&trace.estimate)).collect();
        for (a, b) in d.iter().zip(d.iter().skip(1)) {
            assert!(b <= &(a + 1e-8), "seed {seed}");
        }
    }
}

#[test]
fn traces_are_deterministic_across_worker_counts() {
    let (_, problem) = network1(3, 0.05);
    let opts = SolverOptions { rng_seed: 8, ..Default::default() };
    let baseline = solve_parallel(&problem, &opts).unwrap();
    for threads in [1, 8] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let t =
            pool.install(|| solve_parallel(&problem, &SolverOptions { node_parallel: true, ..opts.clone() }).unwrap());
        assert_eq!(t, baseline);
    }
    for kind in [SolverKind::AsyncExact, SolverKind::AsyncInexact] {
        assert_eq!(solve(&problem, kind, &opts).unwrap(), solve(&problem, kind, &opts).unwrap());
    }
}

#[test]
fn broadcast_accounting() {
    let (_, problem) = network1(6, 0.05);
    let fixed = SolverOptions { stop_rule: StopRule::FixedIterations, max_iterations: 2000, ..Default::default() };
    let par = solve_parallel(&problem, &fixed).unwrap();
    assert_eq!(par.termination, Termination::FixedIterations);
    assert_eq!(par.broadcasts_per_sensor, vec![2000; 10]);
    assert!(par.records.iter().enumerate().all(|(k, r)| r.k == k && r.broadcasts == 10 * k as u64));

    for kind in [SolverKind::AsyncExact, SolverKind::AsyncInexact] {
        let t = solve(&problem, kind, &fixed).unwrap();
        assert_eq!(t.broadcasts_per_sensor.iter().sum::<u64>(), 2000);
        assert!(t.records.iter().enumerate().all(|(k, r)| r.k == k && r.broadcasts == k as u64));
        for i in 0..10 {
            let activations = t.records.iter().filter(|r| r.active_sensor == Some(i)).count() as u64;
            assert_eq!(t.broadcasts_per_sensor[i], activations);
        }
    }
}

#[test]
fn relative_improvement_rule_stops_every_solver() {
    let (_, problem) = network1(2, 0.05);
    let opts = SolverOptions { stop_rule: StopRule::RelativeImprovement, ..Default::default() };
    for kind in [SolverKind::Parallel, SolverKind::AsyncExact, SolverKind::AsyncInexact] {
        let t = solve(&problem, kind, &opts).unwrap();
        assert_eq!(t.termination, Termination::RelativeImprovement, "{kind}");
        assert!(grad_fhat(&problem, &t.estimate).unwrap().norm() < 1e-2);
    }
}

#[test]
fn budget_exhaustion_is_reported() {
    let (_, problem) = network1(2, 0.05);
    let opts = SolverOptions { max_iterations: 3, ..Default::default() };
    let t = solve_parallel(&problem, &opts).unwrap();
    assert_eq!(t.termination, Termination::IterationBudget);
    assert_eq!(t.iterations(), 3);
}
