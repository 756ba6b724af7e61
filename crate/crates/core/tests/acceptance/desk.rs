//! Shared desk-scale benchmark runs: 10 problems x 4 outer mappings x 3
//! methods at the full evaluation budget, computed once and reused by
//! several checks.

use std::sync::OnceLock;
use std::time::Instant;

use manifold_sampling::bench::first_solved_eval;
use manifold_sampling::problems::{build_benchmark, instance_seed, suite, BenchmarkInstance};
use manifold_sampling::solvers::{
    run_goombah, run_msp, CompositeProblem, RunTrace, SolverConfig,
};
use rayon::prelude::*;

pub const METHODS: [&str; 3] = ["msp", "goombah", "goombah-norecourse"];
pub const BASE_SEED: u64 = 0;

pub struct DeskRun {
    pub instance: BenchmarkInstance,
    pub method: &'static str,
    pub config: SolverConfig,
    pub trace: RunTrace,
}

pub struct DeskSuite {
    pub runs: Vec<DeskRun>,
    pub run_seconds: f64,
}

pub fn solve_one(inst: &BenchmarkInstance, method: &str) -> (SolverConfig, RunTrace) {
    let h = inst.h_spec.build();
    let prob = CompositeProblem {
        mapping: &inst.problem,
        h: h.as_ref(),
        x0: inst.problem.x0.clone(),
        lower: inst.problem.lower.clone(),
        upper: inst.problem.upper.clone(),
    };
    let mut cfg = SolverConfig::default_for(&prob.x0);
    cfg.seed = instance_seed(&inst.problem.name, inst.h_kind, inst.seed);
    let trace = match method {
        "msp" => run_msp(&prob, &cfg),
        "goombah" => run_goombah(&prob, &cfg, true),
        "goombah-norecourse" => run_goombah(&prob, &cfg, false),
        other => panic!("unknown method {other}"),
    }
    .unwrap_or_else(|e| panic!("{method} on {} failed: {e}", inst.id));
    (cfg, trace)
}

static DESK: OnceLock<DeskSuite> = OnceLock::new();

pub fn desk_suite() -> &'static DeskSuite {
    DESK.get_or_init(|| {
        let problems: Vec<_> = suite().into_iter().take(10).collect();
        let instances = build_benchmark(&problems, false, BASE_SEED, None).unwrap();
        let jobs: Vec<(BenchmarkInstance, &'static str)> = instances
            .iter()
            .flat_map(|inst| METHODS.map(|m| (inst.clone(), m)))
            .collect();
        let start = Instant::now();
        let runs = jobs
            .into_par_iter()
            .map(|(instance, method)| {
                let (config, trace) = solve_one(&instance, method);
                DeskRun {
                    instance,
                    method,
                    config,
                    trace,
                }
            })
            .collect();
        DeskSuite {
            runs,
            run_seconds: start.elapsed().as_secs_f64(),
        }
    })
}

/// Seed for the post-hoc scoring samples, shared across methods so every
/// solver is graded against the same sample clouds.
pub fn score_seed(inst: &BenchmarkInstance) -> u64 {
    instance_seed(&inst.problem.name, inst.h_kind, inst.seed) ^ 0x5eed_5c0e
}

/// Number of desk instances a method solves at tolerance `tau`.
pub fn solved_count(suite: &DeskSuite, method: &str, tau: f64) -> usize {
    suite
        .runs
        .par_iter()
        .filter(|r| r.method == method)
        .filter(|r| {
            let h = r.instance.h_spec.build();
            first_solved_eval(
                &r.instance.problem,
                h.as_ref(),
                &r.instance.problem.lower,
                &r.instance.problem.upper,
                &r.trace,
                tau,
                score_seed(&r.instance),
            )
            .unwrap_or_else(|e| panic!("scoring {} failed: {e}", r.instance.id))
            .is_some()
        })
        .count()
}
