//! Acceptance suite: one pass/fail line per criterion, exit code 1 if any
//! criterion fails. Oracles live in `support`, the shared benchmark runs in
//! `desk`.

mod desk;
mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use manifold_sampling::bench::{build_bundle, data_profile, first_solved_eval, profiles_to_csv, score_stationarity, ProfileEntry};
use manifold_sampling::models::{build_models, ModelConfig};
use manifold_sampling::problems::{suite, BenchmarkJacobian, VectorMapping};
use manifold_sampling::selections::{
    evaluate_h, CensoredL1, CensoredL1Instance, MaxAffine, MinSquares, MaxSquares,
    PiecewiseMaxQuad, PiecewiseQuadraticInstance, Selection, DEFAULT_ACTIVITY_TOL,
};
use manifold_sampling::solvers::{run_msp, CompositeProblem, OutcomeKind, SolverConfig};
use manifold_sampling::subproblems::{
    solve_chi, solve_tr_subproblem, verify_cauchy_decrease, BoundData, GeneratorSet,
};
use manifold_sampling::history::History;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let criteria: Vec<(&str, fn())> = vec![
        ("selection correctness", selection_correctness),
        ("stationarity-measure oracle equivalence", chi_oracle_equivalence),
        ("trust-region subproblem contract", tr_subproblem_contract),
        ("model gradient accuracy", model_gradient_accuracy),
        ("solver behavioral invariants", solver_invariants),
        ("desk-scale convergence", desk_convergence),
        ("kink resolution on |x|", kink_test),
        ("active-bound stationarity", bound_test),
        ("determinism", determinism),
        ("data-profile arithmetic", profile_arithmetic),
    ];
    let mut failures = 0;
    for (name, f) in criteria {
        match catch_unwind(AssertUnwindSafe(f)) {
            Ok(()) => println!("PASS {name}"),
            Err(e) => {
                failures += 1;
                println!("FAIL {name}: {}", panic_message(&e));
            }
        }
    }
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
}

fn panic_message(e: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = e.downcast_ref::<String>() {
        s.clone()
    } else if let Some(s) = e.downcast_ref::<&str>() {
        (*s).to_string()
    } else {
        "panic with non-string payload".to_string()
    }
}

// ---------------------------------------------------------------------------
// 1. Selection values against brute-force enumeration, gradients against
//    central finite differences.

fn selection_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..1000u64 {
        let p = rng.gen_range(2..=8usize);
        let z = DVector::from_fn(p, |_, _| rng.gen_range(-2.0..2.0));
        let (h, expected): (Box<dyn Selection>, f64) = match case % 4 {
            0 => {
                let e = z.iter().map(|t| t * t).fold(f64::INFINITY, f64::min);
                (Box::new(MinSquares { p }), e)
            }
            1 => {
                let e = z.iter().map(|t| t * t).fold(f64::NEG_INFINITY, f64::max);
                (Box::new(MaxSquares { p }), e)
            }
            2 => {
                let inst = CensoredL1Instance::generate(p, rng.gen()).unwrap();
                let e = (0..p)
                    .map(|i| (inst.d[i] - z[i].max(inst.c[i])).abs())
                    .sum();
                (Box::new(CensoredL1::new(inst)), e)
            }
            _ => {
                let l = rng.gen_range(2..=5);
                let inst = PiecewiseQuadraticInstance::generate(p, l, rng.gen()).unwrap();
                let e = (0..l)
                    .map(|j| {
                        let dz = &z - &inst.centers[j];
                        (dz.transpose() * &inst.q[j] * &dz)[(0, 0)] + inst.b[j]
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                (Box::new(PiecewiseMaxQuad::new(inst)), e)
            }
        };
        let (v, active) = evaluate_h(h.as_ref(), &z).unwrap();
        assert!(
            (v - expected).abs() <= 1e-12 * (1.0 + expected.abs()),
            "case {case}: value {v} vs brute-force {expected}"
        );
        assert!(!active.is_empty(), "case {case}: empty active set");
        for &j in active.iter().take(4) {
            let vj = h.selection_value(j, &z);
            assert!(
                (vj - v).abs() <= 1.01 * DEFAULT_ACTIVITY_TOL * (1.0 + v.abs()),
                "case {case}: active piece {j} off by {}",
                (vj - v).abs()
            );
            let grad = h.selection_gradient(j, &z);
            for i in 0..p {
                let step = 1e-6 * (1.0 + z[i].abs());
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += step;
                zm[i] -= step;
                let fd =
                    (h.selection_value(j, &zp) - h.selection_value(j, &zm)) / (2.0 * step);
                assert!(
                    (fd - grad[i]).abs() <= 1e-5 * (1.0 + grad[i].abs()),
                    "case {case}: gradient component {i} of piece {j}: fd {fd} vs {}",
                    grad[i]
                );
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 10.0, "selection checks took {secs:.1} s");
}

// ---------------------------------------------------------------------------
// 2. Stationarity measure against the coordinate-descent oracle plus
//    closed-form cases.

fn random_bounds(rng: &mut ChaCha8Rng, x: &DVector<f64>) -> BoundData {
    let n = x.len();
    let mut lower = DVector::from_element(n, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(n, f64::INFINITY);
    for i in 0..n {
        let r: f64 = rng.gen();
        if r < 0.4 {
            lower[i] = x[i] - rng.gen_range(0.1..2.0);
        } else if r < 0.6 {
            lower[i] = x[i];
        }
        let r: f64 = rng.gen();
        if r < 0.4 {
            upper[i] = x[i] + rng.gen_range(0.1..2.0);
        } else if r < 0.6 {
            upper[i] = x[i];
        }
    }
    BoundData::new(x, &lower, &upper).unwrap()
}

fn random_genset(rng: &mut ChaCha8Rng, spread_values: bool) -> (GeneratorSet, BoundData) {
    let n = rng.gen_range(1..=3usize);
    let m = rng.gen_range(1..=4usize);
    let generators = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-2.0..2.0));
    let f_center = if spread_values {
        rng.gen_range(-1.0..1.0)
    } else {
        1.0
    };
    // Piece 0 is the center's own active piece, as `build_generator_set`
    // guarantees; the Cauchy-decrease property presumes its presence.
    let f_values: DVector<f64> = DVector::from_fn(m, |j, _| {
        if j == 0 {
            f_center
        } else if spread_values {
            f_center + rng.gen_range(-0.5..0.5)
        } else if rng.gen_bool(0.5) {
            f_center
        } else {
            f_center - rng.gen_range(0.0..0.5)
        }
    });
    let betas = DVector::from_fn(m, |j, _| (f_values[j] - f_center).max(0.0));
    let offsets = DVector::from_fn(m, |j, _| (f_center - f_values[j]).max(0.0));
    let gen = GeneratorSet {
        indices: (0..m).collect(),
        generators,
        f_values,
        betas,
        offsets,
        f_center,
    };
    let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let bounds = random_bounds(rng, &x);
    (gen, bounds)
}

fn single_genset(g: &[f64], offset: f64) -> GeneratorSet {
    let n = g.len();
    GeneratorSet {
        indices: vec![0],
        generators: DMatrix::from_fn(n, 1, |i, _| g[i]),
        f_values: DVector::from_element(1, 1.0 - offset),
        betas: DVector::zeros(1),
        offsets: DVector::from_element(1, offset),
        f_center: 1.0,
    }
}

fn free_bounds(n: usize) -> BoundData {
    BoundData::new(
        &DVector::zeros(n),
        &DVector::from_element(n, f64::NEG_INFINITY),
        &DVector::from_element(n, f64::INFINITY),
    )
    .unwrap()
}

fn chi_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for case in 0..200 {
        let (gen, bounds) = random_genset(&mut rng, false);
        let res = solve_chi(&gen, &bounds, 1e-9).unwrap();
        let chi = res.chi;
        let warm = [(res.lambda_a.clone(), res.lambda_l.clone(), res.lambda_u.clone())];
        let oracle = support::chi_oracle(&gen, &bounds, &warm);
        assert!(
            (chi - oracle).abs() <= 1e-4,
            "case {case}: chi {chi} vs oracle {oracle}"
        );
    }

    // Norm of a lone generator, with and without an activity offset.
    for (g, off) in [
        (vec![3.0, -4.0], 0.0),
        (vec![1.0, 2.0, -2.0], 0.25),
        (vec![-0.5], 0.1),
    ] {
        let gen = single_genset(&g, off);
        let chi = solve_chi(&gen, &free_bounds(g.len()), 1e-9).unwrap().chi;
        let expect = DVector::from_column_slice(&g).norm() + off;
        assert!(
            (chi - expect).abs() <= 1e-8,
            "lone generator: chi {chi} vs {expect}"
        );
    }

    // Zero in the convex hull of the generators.
    let gen = GeneratorSet {
        indices: vec![0, 1],
        generators: DMatrix::from_column_slice(2, 2, &[1.5, -0.5, -1.5, 0.5]),
        f_values: DVector::from_element(2, 1.0),
        betas: DVector::zeros(2),
        offsets: DVector::zeros(2),
        f_center: 1.0,
    };
    let chi = solve_chi(&gen, &free_bounds(2), 1e-9).unwrap().chi;
    assert!(chi <= 1e-8, "zero-in-hull chi = {chi}");

    // Active-bound stationarity: the multiplier of a touching bound absorbs
    // the whole gradient at no cost.
    let x = DVector::from_element(1, 0.3);
    let lower_active = BoundData::new(&x, &x, &DVector::from_element(1, f64::INFINITY)).unwrap();
    let chi = solve_chi(&single_genset(&[2.0], 0.0), &lower_active, 1e-9)
        .unwrap()
        .chi;
    assert!(chi <= 1e-8, "active lower bound chi = {chi}");
    let upper_active = BoundData::new(&x, &DVector::from_element(1, f64::NEG_INFINITY), &x).unwrap();
    let chi = solve_chi(&single_genset(&[-3.0], 0.0), &upper_active, 1e-9)
        .unwrap()
        .chi;
    assert!(chi <= 1e-8, "active upper bound chi = {chi}");
}

// ---------------------------------------------------------------------------
// 3. Trust-region subproblem: feasibility, Cauchy decrease, and a grid
//    oracle in two dimensions.

fn tr_subproblem_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut cauchy_fail = 0;
    for case in 0..200 {
        let (gen, bounds) = random_genset(&mut rng, true);
        let n = bounds.x.len();
        let delta = rng.gen_range(0.05..1.0);
        let sol = solve_tr_subproblem(&gen, &bounds, None, delta, 1e-9)
            .unwrap_or_else(|e| panic!("case {case}: {e}"));
        assert!(
            sol.s.norm() <= delta * (1.0 + 1e-9),
            "case {case}: step norm {} > delta {delta}",
            sol.s.norm()
        );
        for i in 0..n {
            let xi = bounds.x[i] + sol.s[i];
            assert!(
                xi >= bounds.lower[i] - 1e-9 && xi <= bounds.upper[i] + 1e-9,
                "case {case}: coordinate {i} leaves the box"
            );
        }
        let v = support::epigraph(&gen, &sol.s);
        assert!(
            (v - sol.v).abs() <= 1e-9 * (1.0 + v.abs()),
            "case {case}: reported v {} vs recomputed {v}",
            sol.v
        );
        let chi = solve_chi(&gen, &bounds, 1e-9).unwrap().chi;
        if !verify_cauchy_decrease(&sol, chi, delta, 1e-4, 0.0) {
            cauchy_fail += 1;
        }
        if n == 2 {
            let oracle = support::tr_oracle_2d(&gen, &bounds, delta);
            assert!(
                (sol.v - oracle).abs() <= 1e-4,
                "case {case}: v {} vs grid oracle {oracle}",
                sol.v
            );
        }
    }
    assert!(cauchy_fail == 0, "{cauchy_fail}/200 Cauchy-decrease failures");
}

// ---------------------------------------------------------------------------
// 4. Model gradients: error scaling in the sampling radius, exactness on an
//    affine mapping.

struct AffineMap {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl VectorMapping for AffineMap {
    fn input_dim(&self) -> usize {
        self.a.ncols()
    }
    fn output_dim(&self) -> usize {
        self.a.nrows()
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b
    }
}

fn model_gradients_at(
    mapping: &dyn VectorMapping,
    center: &DVector<f64>,
    radius: f64,
) -> DMatrix<f64> {
    let n = mapping.input_dim();
    let p = mapping.output_dim();
    let h = MinSquares { p };
    let mut history = History::new(n, p, 10_000, DEFAULT_ACTIVITY_TOL);
    let free = DVector::from_element(n, f64::INFINITY);
    let models = build_models(
        &mut history,
        mapping,
        &h,
        &(-&free),
        &free,
        center,
        radius,
        &ModelConfig::default(),
    )
    .unwrap();
    models.gradients
}

fn model_gradient_accuracy() {
    let by_name: std::collections::HashMap<String, _> =
        suite().into_iter().map(|p| (p.name.clone(), p)).collect();
    let names = ["rosenbrock", "beale", "bard", "wood", "extended_rosenbrock"];
    let deltas = [1e-1, 1e-2, 1e-3];
    for name in names {
        let prob = &by_name[name];
        let jac = prob.jacobian(&prob.x0);
        let p = prob.p();
        let mut errs = vec![Vec::new(); p];
        for &delta in &deltas {
            let grads = model_gradients_at(prob, &prob.x0, delta);
            for i in 0..p {
                errs[i].push((grads.column(i) - jac.row(i).transpose()).norm());
            }
        }
        for (i, e) in errs.iter().enumerate() {
            if e.iter().all(|v| *v < 1e-10) {
                continue;
            }
            let lx: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
            let ly: Vec<f64> = e.iter().map(|v| v.max(1e-300).ln()).collect();
            let mx = lx.iter().sum::<f64>() / 3.0;
            let my = ly.iter().sum::<f64>() / 3.0;
            let slope = lx
                .iter()
                .zip(&ly)
                .map(|(x, y)| (x - mx) * (y - my))
                .sum::<f64>()
                / lx.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
            assert!(
                slope >= 0.9,
                "{name} component {i}: slope {slope:.3}, errors {e:?}"
            );
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let a = DMatrix::from_fn(4, 3, |_, _| rng.gen_range(-2.0..2.0));
    let b = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
    let map = AffineMap { a: a.clone(), b };
    let center = DVector::from_column_slice(&[0.3, -0.7, 1.1]);
    let grads = model_gradients_at(&map, &center, 0.5);
    for i in 0..4 {
        let err = (grads.column(i) - a.row(i).transpose()).norm();
        assert!(err <= 1e-10, "affine component {i}: error {err}");
    }
}

// ---------------------------------------------------------------------------
// 5. Behavioral invariants on every desk benchmark run.

fn solver_invariants() {
    for run in &desk::desk_suite().runs {
        let label = format!("{} / {}", run.method, run.instance.id);
        let cfg = &run.config;
        let trace = &run.trace;
        let n = run.instance.problem.n();
        assert_eq!(cfg.eval_budget, 100 * (n + 1), "{label}: budget");
        assert!(!trace.evals.is_empty(), "{label}: no evaluations");
        assert!(!trace.iterations.is_empty(), "{label}: no iterations");
        assert!(
            trace.evals.len() <= cfg.eval_budget,
            "{label}: {} evals over budget {}",
            trace.evals.len(),
            cfg.eval_budget
        );
        for (k, e) in trace.evals.iter().enumerate() {
            assert_eq!(e.eval_index, k, "{label}: evaluation indices not contiguous");
            for i in 0..n {
                assert!(
                    e.x[i] >= run.instance.problem.lower[i] - 1e-12
                        && e.x[i] <= run.instance.problem.upper[i] + 1e-12,
                    "{label}: infeasible evaluation at index {k}"
                );
            }
        }
        let exhausted = trace
            .iterations
            .iter()
            .any(|r| r.kind == OutcomeKind::BudgetExhausted);
        if exhausted {
            assert_eq!(
                trace.evals.len(),
                cfg.eval_budget,
                "{label}: budget-exhausted run did not spend the whole budget"
            );
        }
        let mut prev_f = trace.evals[0].f;
        for (k, row) in trace.iterations.iter().enumerate() {
            assert!(
                row.f <= prev_f,
                "{label}: accepted value rose at iteration {k}"
            );
            if row.kind == OutcomeKind::Successful {
                assert!(
                    row.f < prev_f,
                    "{label}: successful iteration {k} without strict decrease"
                );
            }
            prev_f = row.f;
        }
        for w in trace.iterations.windows(2) {
            let ratio = w[1].delta / w[0].delta;
            let capped = (w[1].delta - cfg.delta_max).abs() <= 1e-9 * cfg.delta_max
                && ratio <= cfg.gamma_inc + 1e-9;
            assert!(
                (ratio - cfg.gamma_dec).abs() <= 1e-9
                    || (ratio - cfg.gamma_inc).abs() <= 1e-9
                    || capped,
                "{label}: radius ratio {ratio} at iteration {}",
                w[1].iter
            );
        }
    }
}

// ---------------------------------------------------------------------------
// 6. Desk-scale convergence and the recourse-versus-no-recourse ordering.

fn desk_convergence() {
    let suite = desk::desk_suite();
    let total = suite.runs.len() / desk::METHODS.len();
    let score_start = Instant::now();
    let msp_coarse = desk::solved_count(suite, "msp", 1e-1);
    let goombah = desk::solved_count(suite, "goombah", 1e-5);
    let norecourse = desk::solved_count(suite, "goombah-norecourse", 1e-5);
    let elapsed = suite.run_seconds + score_start.elapsed().as_secs_f64();
    println!(
        "  desk: msp {msp_coarse}/{total} at 1e-1; goombah {goombah}/{total} vs \
         no-recourse {norecourse}/{total} at 1e-5; {elapsed:.0} s"
    );
    assert!(
        msp_coarse as f64 >= 0.6 * total as f64,
        "msp solved {msp_coarse}/{total} at tolerance 1e-1, needed 60%"
    );
    assert!(
        goombah >= norecourse,
        "recourse solved {goombah}, no-recourse {norecourse} at tolerance 1e-5"
    );
    assert!(elapsed < 1800.0, "desk runs plus scoring took {elapsed:.0} s");
}

// ---------------------------------------------------------------------------
// 7/8. One-dimensional sharp cases.

struct Identity1;

impl VectorMapping for Identity1 {
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
}

impl BenchmarkJacobian for Identity1 {
    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0)
    }
}

fn kink_test() {
    let mapping = Identity1;
    let h = MaxAffine::abs_1d();
    let prob = CompositeProblem {
        mapping: &mapping,
        h: &h,
        x0: DVector::from_element(1, 0.5),
        lower: DVector::from_element(1, f64::NEG_INFINITY),
        upper: DVector::from_element(1, f64::INFINITY),
    };
    let mut cfg = SolverConfig::default_for(&prob.x0);
    cfg.eval_budget = 50;
    let trace = run_msp(&prob, &cfg).unwrap();
    assert!(trace.evals.len() <= 50, "spent {} evaluations", trace.evals.len());
    let x_final = DVector::from_column_slice(&trace.final_x);
    assert!(
        x_final[0].abs() <= 1e-6,
        "final |x| = {}",
        x_final[0].abs()
    );
    let nearby: Vec<DVector<f64>> = trace
        .evals
        .iter()
        .map(|e| DVector::from_column_slice(&e.x))
        .filter(|p| (p - &x_final).norm() <= 1e-5 && (p - &x_final).norm() > 0.0)
        .collect();
    let chi = score_stationarity(&mapping, &h, &x_final, &prob.lower, &prob.upper, &nearby, 7)
        .unwrap();
    assert!(chi <= 1e-5, "scored stationarity {chi}");
    let bundle = build_bundle(&mapping, &h, &x_final, &nearby, 7).unwrap();
    let has = |target: f64| {
        (0..bundle.gradients.ncols()).any(|c| (bundle.gradients[(0, c)] - target).abs() <= 1e-12)
    };
    assert!(
        has(1.0) && has(-1.0),
        "bundle misses a branch gradient: {:?}",
        bundle.gradients.row(0)
    );
}

fn bound_test() {
    let mapping = Identity1;
    let h = MaxAffine::identity_1d();
    let prob = CompositeProblem {
        mapping: &mapping,
        h: &h,
        x0: DVector::from_element(1, 0.5),
        lower: DVector::from_element(1, 0.0),
        upper: DVector::from_element(1, f64::INFINITY),
    };
    let mut cfg = SolverConfig::default_for(&prob.x0);
    cfg.eval_budget = 30;
    let trace = run_msp(&prob, &cfg).unwrap();
    assert!(trace.evals.len() <= 30, "spent {} evaluations", trace.evals.len());
    let x_final = DVector::from_column_slice(&trace.final_x);
    assert!(x_final[0] >= 0.0, "incumbent left the box");
    assert!(x_final[0] <= 1e-8, "incumbent x = {}", x_final[0]);
    let chi = score_stationarity(&mapping, &h, &x_final, &prob.lower, &prob.upper, &[], 8)
        .unwrap();
    assert!(chi <= 1e-6, "scored stationarity {chi}");
}

// ---------------------------------------------------------------------------
// 9. Determinism of traces and of re-scoring.

fn determinism() {
    let suite = desk::desk_suite();
    for method in desk::METHODS {
        for run in suite.runs.iter().filter(|r| r.method == method).take(2) {
            let (_, again) = desk::solve_one(&run.instance, method);
            assert_eq!(
                run.trace.to_jsonl().unwrap(),
                again.to_jsonl().unwrap(),
                "{method} / {}: traces differ between invocations",
                run.instance.id
            );
        }
    }

    let entries = |_: ()| -> Vec<ProfileEntry> {
        suite
            .runs
            .iter()
            .filter(|r| r.method == "msp")
            .take(8)
            .map(|r| {
                let h = r.instance.h_spec.build();
                let solved_at = first_solved_eval(
                    &r.instance.problem,
                    h.as_ref(),
                    &r.instance.problem.lower,
                    &r.instance.problem.upper,
                    &r.trace,
                    1e-3,
                    desk::score_seed(&r.instance),
                )
                .unwrap();
                ProfileEntry {
                    instance_id: r.instance.id.clone(),
                    dimension: r.instance.problem.n(),
                    solved_at,
                }
            })
            .collect()
    };
    let csv_a = profiles_to_csv(&[data_profile("msp", 1e-3, &entries(()), 100.0)]);
    let csv_b = profiles_to_csv(&[data_profile("msp", 1e-3, &entries(()), 100.0)]);
    assert_eq!(csv_a, csv_b, "re-scored profile CSVs differ");
    assert!(csv_a.starts_with("method,tau,alpha,fraction\n"));
}

// ---------------------------------------------------------------------------
// 10. Data-profile arithmetic against hand-computed curves.

fn profile_arithmetic() {
    let entries = vec![
        ProfileEntry {
            instance_id: "a".into(),
            dimension: 2,
            solved_at: Some(6),
        },
        ProfileEntry {
            instance_id: "b".into(),
            dimension: 3,
            solved_at: Some(40),
        },
        ProfileEntry {
            instance_id: "c".into(),
            dimension: 5,
            solved_at: None,
        },
    ];
    // By hand: t = 6/(2+1) = 2 and 40/(3+1) = 10, each worth 1/3.
    let curve = data_profile("m", 1e-3, &entries, 10.0);
    let third = 1.0 / 3.0;
    assert_eq!(
        curve.points,
        vec![(0.0, 0.0), (2.0, third), (10.0, third + third), (10.0, third + third)]
    );

    // A cutoff drops the slow solve: t = 50 exceeds alpha_max = 20.
    let entries = vec![
        ProfileEntry {
            instance_id: "a".into(),
            dimension: 2,
            solved_at: Some(6),
        },
        ProfileEntry {
            instance_id: "b".into(),
            dimension: 3,
            solved_at: Some(200),
        },
    ];
    let curve = data_profile("m", 1e-3, &entries, 20.0);
    assert_eq!(curve.points, vec![(0.0, 0.0), (2.0, 0.5), (20.0, 0.5)]);
}
