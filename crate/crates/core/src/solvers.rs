//! The two derivative-free solvers and their shared driver plumbing.
//!
//! [`run_msp`] wraps the manifold-sampling trust-region loop: build
//! gradient-accurate models, gather a generator set from nearby activity,
//! minimize the piecewise-affine primal model over the trust region, and
//! accept or shrink on the usual actual-versus-predicted test. The inner
//! loop ([`msp_loop`]) may re-gather generators several times within one
//! outer iteration when the trial point reveals new activity.
//!
//! [`run_goombah`] first tries a glassbox step: minimize `h(M(x + s))`
//! directly over the trust region with a projected descent multistart
//! ([`solve_glassbox`]). When the glassbox step fails its sufficient-decrease
//! test the solver either delegates the iteration to the manifold-sampling
//! loop (`recourse = true`) or falls back to a model-ratio shrink rule.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::History;
use crate::models::{build_models, ModelConfig, ModelJacobian};
use crate::problems::VectorMapping;
use crate::selections::{Selection, DEFAULT_ACTIVITY_TOL};
use crate::subproblems::{
    build_generator_set, project_ball_box, solve_chi, solve_tr_subproblem, BoundData,
};

/// Tuning parameters shared by both solvers.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub delta0: f64,
    pub delta_max: f64,
    /// Contraction factor, in (0, 1).
    pub gamma_dec: f64,
    /// Expansion factor, > 1.
    pub gamma_inc: f64,
    /// Acceptance threshold for the manifold-sampling ratio test.
    pub eta1: f64,
    /// Acceptance threshold for the glassbox ratio test.
    pub eta_tilde1: f64,
    /// Radius-versus-stationarity guard; an iteration with
    /// `delta > eta2 * chi` is declared unsuccessful outright.
    pub eta2: f64,
    /// Exponent in the glassbox ratio denominator `delta^(1 + omega)`.
    pub omega: f64,
    /// Generator-gathering radius factor for ascent pieces (`c1 * delta^2`).
    pub c1: f64,
    /// Generator-gathering radius factor for descent pieces (`c2 * delta`).
    pub c2: f64,
    /// Optional curvature term for the primal model; `None` keeps it
    /// piecewise affine.
    pub hessian: Option<DMatrix<f64>>,
    /// Fraction-of-Cauchy-decrease constant.
    pub kappa_fcd: f64,
    pub eval_budget: usize,
    /// Stop once `chi <= chi_stop`; zero disables the test.
    pub chi_stop: f64,
    /// Stop once `delta <= delta_stop`; zero disables the test.
    pub delta_stop: f64,
    pub activity_tol: f64,
    /// Accuracy handed to the conic subproblem solver.
    pub subproblem_tol: f64,
    pub model: ModelConfig,
    pub seed: u64,
}

impl SolverConfig {
    /// Standard defaults scaled to the starting point.
    pub fn default_for(x0: &DVector<f64>) -> Self {
        let n = x0.len();
        let delta0 = 0.1 * x0.amax().max(1.0);
        SolverConfig {
            delta0,
            delta_max: 1e3 * delta0,
            gamma_dec: 0.5,
            gamma_inc: 2.0,
            eta1: 1e-4,
            eta_tilde1: 1e-4,
            eta2: f64::INFINITY,
            omega: 1.0,
            c1: 1.0 + 1e-8,
            c2: 1.0 + 1e-8,
            hessian: None,
            kappa_fcd: 1e-4,
            eval_budget: 100 * (n + 1),
            chi_stop: 0.0,
            delta_stop: 0.0,
            activity_tol: DEFAULT_ACTIVITY_TOL,
            subproblem_tol: 1e-9,
            model: ModelConfig::default(),
            seed: 0,
        }
    }

    /// Curvature bound entering the Cauchy-decrease test; zero for the
    /// piecewise-affine model.
    pub fn kappa_h(&self) -> f64 {
        self.hessian.as_ref().map_or(0.0, |h| h.norm())
    }
}

/// A composite problem `min h(F(x))` over a box.
pub struct CompositeProblem<'a> {
    pub mapping: &'a dyn VectorMapping,
    pub h: &'a dyn Selection,
    pub x0: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl CompositeProblem<'_> {
    fn check(&self) -> Result<()> {
        let n = self.mapping.input_dim();
        if self.x0.len() != n || self.lower.len() != n || self.upper.len() != n {
            return Err(Error::invalid("CompositeProblem: dimension mismatch"));
        }
        if self.mapping.output_dim() != self.h.input_dim() {
            return Err(Error::invalid(
                "CompositeProblem: mapping output and selection input disagree",
            ));
        }
        for i in 0..n {
            if !(self.lower[i] <= self.x0[i] && self.x0[i] <= self.upper[i]) {
                return Err(Error::invalid("CompositeProblem: x0 violates bounds"));
            }
        }
        Ok(())
    }
}

/// How an outer iteration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeKind {
    /// Ratio test passed; incumbent moved and the radius grew.
    Successful,
    /// Ratio test failed; radius shrank.
    Unsuccessful,
    /// The model is stationary to working precision at the incumbent.
    Stationary,
    /// The budget ran out mid-iteration.
    BudgetExhausted,
}

/// Result of one pass through the manifold-sampling loop.
#[derive(Debug, Clone)]
pub struct IterationOutcome {
    pub kind: OutcomeKind,
    pub x: DVector<f64>,
    pub f: f64,
    pub delta_next: f64,
    /// Stationarity measure from the last generator set examined.
    pub chi: f64,
}

/// Per-iteration log row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRow {
    pub iter: usize,
    pub delta: f64,
    /// Absent when no generator set was examined this iteration.
    pub chi: Option<f64>,
    pub f: f64,
    pub kind: OutcomeKind,
    pub evals_used: usize,
}

/// Per-evaluation log row: the incumbent-best value after each `F` call, in
/// evaluation order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    pub eval_index: usize,
    pub x: Vec<f64>,
    pub f: f64,
    pub best_f: f64,
}

/// Full record of a solver run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunTrace {
    pub method: String,
    pub evals: Vec<EvalRow>,
    pub iterations: Vec<IterationRow>,
    pub final_x: Vec<f64>,
    pub final_f: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "row")]
enum TraceLine {
    Meta {
        method: String,
        final_x: Vec<f64>,
        final_f: f64,
    },
    Eval(EvalRow),
    Iter(IterationRow),
}

impl RunTrace {
    /// Best composite value seen within the first `budget` evaluations.
    pub fn best_within(&self, budget: usize) -> Option<f64> {
        self.evals
            .iter()
            .filter(|r| r.eval_index < budget)
            .map(|r| r.best_f)
            .last()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let meta = TraceLine::Meta {
            method: self.method.clone(),
            final_x: self.final_x.clone(),
            final_f: self.final_f,
        };
        out.push_str(&serde_json::to_string(&meta)?);
        out.push('\n');
        for e in &self.evals {
            out.push_str(&serde_json::to_string(&TraceLine::Eval(e.clone()))?);
            out.push('\n');
        }
        for i in &self.iterations {
            out.push_str(&serde_json::to_string(&TraceLine::Iter(i.clone()))?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut method = None;
        let mut final_x = Vec::new();
        let mut final_f = f64::NAN;
        let mut evals = Vec::new();
        let mut iterations = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<TraceLine>(line)? {
                TraceLine::Meta {
                    method: m,
                    final_x: x,
                    final_f: f,
                } => {
                    method = Some(m);
                    final_x = x;
                    final_f = f;
                }
                TraceLine::Eval(e) => evals.push(e),
                TraceLine::Iter(i) => iterations.push(i),
            }
        }
        Ok(RunTrace {
            method: method.ok_or_else(|| Error::invalid("trace has no meta line"))?,
            evals,
            iterations,
            final_x,
            final_f,
        })
    }
}

fn eval_rows(history: &History) -> Vec<EvalRow> {
    let mut rows: Vec<&crate::history::EvaluationRecord> = history.records.iter().collect();
    rows.sort_by_key(|r| r.eval_index);
    let mut best = f64::INFINITY;
    rows.iter()
        .map(|r| {
            best = best.min(r.f);
            EvalRow {
                eval_index: r.eval_index,
                x: r.x.iter().cloned().collect(),
                f: r.f,
                best_f: best,
            }
        })
        .collect()
}

const MAX_INNER_PASSES: usize = 10_000;

/// Radii below this (relative to the incumbent's magnitude) cannot move the
/// iterate in floating point; the run is stationary to working precision.
fn delta_floor(x: &DVector<f64>) -> f64 {
    1e-13 * (1.0 + x.amax())
}

/// One outer iteration of the manifold-sampling method, entered at radius
/// `delta`. The returned radius is either `gamma_dec * delta` or
/// `gamma_inc * delta` regardless of how often the inner loop re-gathered
/// generators or shrank its working radius.
pub fn msp_loop(
    prob: &CompositeProblem,
    cfg: &SolverConfig,
    history: &mut History,
    x: &DVector<f64>,
    delta: f64,
) -> Result<IterationOutcome> {
    let entry_delta = delta;
    let mut work_delta = delta;
    let center_idx = history
        .evaluate(prob.mapping, prob.h, x)
        .map_err(|e| match e {
            Error::BudgetExhausted => Error::MissingPrerequisite(
                "manifold-sampling loop entered with an unevaluated incumbent".into(),
            ),
            other => other,
        })?;
    let f_x = history.records[center_idx].f;
    let bounds = BoundData::new(x, &prob.lower, &prob.upper)?;
    let shrink = |kind: OutcomeKind, chi: f64| IterationOutcome {
        kind,
        x: x.clone(),
        f: f_x,
        delta_next: cfg.gamma_dec * entry_delta,
        chi,
    };

    let mut last_chi = f64::NAN;
    for _pass in 0..MAX_INNER_PASSES {
        if work_delta < delta_floor(x) {
            return Ok(shrink(OutcomeKind::Stationary, last_chi));
        }
        let models = match build_models(
            history,
            prob.mapping,
            prob.h,
            &prob.lower,
            &prob.upper,
            x,
            work_delta,
            &cfg.model,
        ) {
            Ok(m) => m,
            Err(Error::BudgetExhausted) => {
                return Ok(shrink(OutcomeKind::BudgetExhausted, last_chi))
            }
            Err(e) => return Err(e),
        };
        let gen = build_generator_set(history, &models, prob.h, x, work_delta, cfg.c1, cfg.c2)?;
        // A defeated conic solve says nothing about stationarity; shrink and
        // let the next iteration retry on a better-conditioned region.
        let sol = match solve_tr_subproblem(
            &gen,
            &bounds,
            cfg.hessian.as_ref(),
            work_delta,
            cfg.subproblem_tol,
        ) {
            Ok(s) => s,
            Err(Error::SubproblemFailure(_)) => {
                return Ok(shrink(OutcomeKind::Unsuccessful, last_chi))
            }
            Err(e) => return Err(e),
        };
        let chi = match solve_chi(&gen, &bounds, cfg.subproblem_tol) {
            Ok(r) => r.chi,
            Err(Error::SubproblemFailure(_)) => {
                return Ok(shrink(OutcomeKind::Unsuccessful, last_chi))
            }
            Err(e) => return Err(e),
        };
        last_chi = chi;

        // Radius out of proportion with stationarity: shrink immediately.
        let guard = if chi > 0.0 { cfg.eta2 * chi } else { 0.0 };
        if work_delta > guard {
            return Ok(shrink(OutcomeKind::Unsuccessful, chi));
        }
        if sol.predicted_decrease <= 1e-16 * (1.0 + f_x.abs()) {
            return Ok(shrink(OutcomeKind::Stationary, chi));
        }

        let x_trial = x + &sol.s;
        let trial_idx = match history.evaluate(prob.mapping, prob.h, &x_trial) {
            Ok(i) => i,
            Err(Error::BudgetExhausted) => {
                return Ok(shrink(OutcomeKind::BudgetExhausted, chi))
            }
            Err(e) => return Err(e),
        };
        let f_trial = history.records[trial_idx].f;
        let rho = (f_x - f_trial) / sol.predicted_decrease;
        if rho >= cfg.eta1 {
            return Ok(IterationOutcome {
                kind: OutcomeKind::Successful,
                x: history.records[trial_idx].x.clone(),
                f: f_trial,
                delta_next: cfg.gamma_inc * entry_delta,
                chi,
            });
        }

        // The trial point is now in the history; regather. If nothing new
        // turned up, either give up the iteration (the trial activity was
        // already represented) or shrink the working radius and retry.
        let gen_bar =
            build_generator_set(history, &models, prob.h, x, work_delta, cfg.c1, cfg.c2)?;
        if gen_bar.indices == gen.indices {
            let trial_active = &history.records[trial_idx].active;
            if trial_active.iter().any(|j| gen.indices.contains(j)) {
                return Ok(shrink(OutcomeKind::Unsuccessful, chi));
            }
            work_delta *= cfg.gamma_dec;
        }
    }
    Err(Error::Internal(
        "manifold-sampling inner loop failed to terminate".into(),
    ))
}

/// Run the manifold-sampling method from `prob.x0` until a stopping test or
/// the evaluation budget fires.
pub fn run_msp(prob: &CompositeProblem, cfg: &SolverConfig) -> Result<RunTrace> {
    prob.check()?;
    let n = prob.mapping.input_dim();
    let p = prob.mapping.output_dim();
    let mut history = History::new(n, p, cfg.eval_budget.max(1), cfg.activity_tol);
    let mut x = prob.x0.clone();
    let mut delta = cfg.delta0;
    history.evaluate(prob.mapping, prob.h, &x)?;

    let mut iterations = Vec::new();
    let mut iter = 0;
    loop {
        if history.budget_left() == 0 {
            break;
        }
        let outcome = msp_loop(prob, cfg, &mut history, &x, delta)?;
        iterations.push(IterationRow {
            iter,
            delta,
            chi: chi_opt(outcome.chi),
            f: outcome.f,
            kind: outcome.kind,
            evals_used: history.evals_used,
        });
        iter += 1;
        x = outcome.x;
        delta = outcome.delta_next.min(cfg.delta_max);
        if outcome.kind == OutcomeKind::BudgetExhausted
            || stop_tests(cfg, outcome.chi, delta)
            || delta < delta_floor(&x)
        {
            break;
        }
    }
    finish_trace("msp", &history, iterations)
}

fn chi_opt(chi: f64) -> Option<f64> {
    chi.is_finite().then_some(chi)
}

fn stop_tests(cfg: &SolverConfig, chi: f64, delta: f64) -> bool {
    (cfg.chi_stop > 0.0 && chi.is_finite() && chi <= cfg.chi_stop)
        || (cfg.delta_stop > 0.0 && delta <= cfg.delta_stop)
}

fn finish_trace(
    method: &str,
    history: &History,
    iterations: Vec<IterationRow>,
) -> Result<RunTrace> {
    let best = history
        .best()
        .ok_or_else(|| Error::Internal("run produced no evaluations".into()))?;
    Ok(RunTrace {
        method: method.to_string(),
        evals: eval_rows(history),
        iterations,
        final_x: history.records[best].x.iter().cloned().collect(),
        final_f: history.records[best].f,
    })
}

/// Approximately minimize `h(M(x + s))` over the trust region intersected
/// with the box, by projected piecewise-gradient descent from several start
/// points. Returns the step and its predicted composite value; the zero
/// step is always a candidate, so the result never predicts an increase.
pub fn solve_glassbox(
    models: &ModelJacobian,
    h: &dyn Selection,
    x: &DVector<f64>,
    delta: f64,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    activity_tol: f64,
    rng: &mut ChaCha8Rng,
) -> (DVector<f64>, f64) {
    let n = x.len();
    let objective = |s: &DVector<f64>| h.value(&models.predict(s));
    let project = |s: &DVector<f64>| project_ball_box(s, delta, x, lower, upper);
    let piece_gradient = |s: &DVector<f64>| -> DVector<f64> {
        let z = models.predict(s);
        let j = *h
            .active_indices(&z, activity_tol)
            .first()
            .expect("a continuous selection always has an active piece");
        &models.gradients * h.selection_gradient(j, &z)
    };

    let mut starts: Vec<DVector<f64>> = vec![DVector::zeros(n)];
    let g0 = piece_gradient(&DVector::zeros(n));
    if g0.norm() > 0.0 {
        starts.push(project(&(-&g0 * (delta / g0.norm()))));
    }
    for _ in 0..10 {
        let raw = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)) * delta;
        starts.push(project(&raw));
    }

    let mut best_s = DVector::zeros(n);
    let mut best_q = objective(&best_s);
    for start in starts {
        let mut s = start;
        let mut q = objective(&s);
        for _ in 0..200 {
            let g = piece_gradient(&s);
            let gn = g.norm();
            if gn <= 1e-14 {
                break;
            }
            let mut t = delta / gn;
            let mut improved = false;
            while t > 1e-12 * delta / gn {
                let cand = project(&(&s - &g * t));
                let qc = objective(&cand);
                if qc < q - 1e-14 * (1.0 + q.abs()) {
                    s = cand;
                    q = qc;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if q < best_q {
            best_q = q;
            best_s = s;
        }
    }
    (best_s, best_q)
}

/// Run the glassbox-first method. With `recourse` the manifold-sampling
/// loop handles every iteration whose glassbox step fails the decrease
/// test; without it a model-ratio rule decides between accepting the step
/// anyway and shrinking.
pub fn run_goombah(
    prob: &CompositeProblem,
    cfg: &SolverConfig,
    recourse: bool,
) -> Result<RunTrace> {
    prob.check()?;
    let n = prob.mapping.input_dim();
    let p = prob.mapping.output_dim();
    let mut history = History::new(n, p, cfg.eval_budget.max(1), cfg.activity_tol);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = prob.x0.clone();
    let mut delta = cfg.delta0;
    let idx0 = history.evaluate(prob.mapping, prob.h, &x)?;
    let mut f_x = history.records[idx0].f;
    let method = if recourse { "goombah" } else { "goombah-norecourse" };

    let mut iterations = Vec::new();
    let mut iter = 0;
    'outer: loop {
        if history.budget_left() == 0 {
            break;
        }
        let mut row = IterationRow {
            iter,
            delta,
            chi: None,
            f: f_x,
            kind: OutcomeKind::Unsuccessful,
            evals_used: history.evals_used,
        };
        let models = match build_models(
            &mut history,
            prob.mapping,
            prob.h,
            &prob.lower,
            &prob.upper,
            &x,
            delta,
            &cfg.model,
        ) {
            Ok(m) => m,
            Err(Error::BudgetExhausted) => {
                row.kind = OutcomeKind::BudgetExhausted;
                row.evals_used = history.evals_used;
                iterations.push(row);
                break;
            }
            Err(e) => return Err(e),
        };
        let (s_tilde, hm_trial) = solve_glassbox(
            &models,
            prob.h,
            &x,
            delta,
            &prob.lower,
            &prob.upper,
            cfg.activity_tol,
            &mut rng,
        );
        let x_trial = &x + &s_tilde;
        let duplicate = history.find(&x_trial).is_some();

        if duplicate && !recourse {
            delta *= cfg.gamma_dec;
            row.evals_used = history.evals_used;
            iterations.push(row);
            iter += 1;
            if stop_tests(cfg, f64::NAN, delta) || delta < delta_floor(&x) {
                break;
            }
            continue;
        }
        if !duplicate {
            let trial_idx = match history.evaluate(prob.mapping, prob.h, &x_trial) {
                Ok(i) => i,
                Err(Error::BudgetExhausted) => {
                    row.kind = OutcomeKind::BudgetExhausted;
                    row.evals_used = history.evals_used;
                    iterations.push(row);
                    break;
                }
                Err(e) => return Err(e),
            };
            let f_trial = history.records[trial_idx].f;
            let rho_tilde = (f_x - f_trial) / delta.powf(1.0 + cfg.omega);
            if rho_tilde > cfg.eta_tilde1 {
                x = history.records[trial_idx].x.clone();
                f_x = f_trial;
                delta = (cfg.gamma_inc * delta).min(cfg.delta_max);
                row.kind = OutcomeKind::Successful;
                row.f = f_x;
                row.evals_used = history.evals_used;
                iterations.push(row);
                iter += 1;
                continue;
            }
            if !recourse {
                let hm_center = prob.h.value(&models.values);
                let model_drop = hm_center - hm_trial;
                if model_drop > 0.0 && (f_x - f_trial) / model_drop > cfg.eta1 {
                    x = history.records[trial_idx].x.clone();
                    f_x = f_trial;
                    delta = (cfg.gamma_inc * delta).min(cfg.delta_max);
                    row.kind = OutcomeKind::Successful;
                    row.f = f_x;
                } else {
                    delta *= cfg.gamma_dec;
                }
                row.evals_used = history.evals_used;
                iterations.push(row);
                iter += 1;
                if stop_tests(cfg, f64::NAN, delta) || delta < delta_floor(&x) {
                    break;
                }
                continue;
            }
        }

        // Recourse: the glassbox step taught us nothing (duplicate proposal)
        // or failed its decrease test; run one manifold-sampling iteration.
        let outcome = msp_loop(prob, cfg, &mut history, &x, delta)?;
        x = outcome.x;
        f_x = outcome.f;
        delta = outcome.delta_next.min(cfg.delta_max);
        row.chi = chi_opt(outcome.chi);
        row.f = f_x;
        row.kind = outcome.kind;
        row.evals_used = history.evals_used;
        iterations.push(row);
        iter += 1;
        if outcome.kind == OutcomeKind::BudgetExhausted
            || stop_tests(cfg, outcome.chi, delta)
            || delta < delta_floor(&x)
        {
            break 'outer;
        }
    }
    finish_trace(method, &history, iterations)
}
