//! Generator sets, the piecewise-affine trust-region subproblem, and the
//! stationarity measure.
//!
//! [`build_generator_set`] gathers selection-function gradients (mapped
//! through the model Jacobian) from activity observed at nearby history
//! points. [`solve_tr_subproblem`] minimizes the resulting max-affine model
//! over the trust region intersected with the box, and [`solve_chi`]
//! computes the bound-aware stationarity measure. Both are cast as small
//! conic programs and handed to Clarabel; solutions are cleaned back onto
//! the exact feasible set afterwards so downstream tests of feasibility
//! never depend on solver tolerances.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::history::History;
use crate::models::ModelJacobian;
use crate::selections::Selection;

/// Gradient bundle defining the piecewise-affine model
/// `max_j { f_j + g_j^T s - beta_j } - f_center`.
#[derive(Debug, Clone)]
pub struct GeneratorSet {
    /// Selection indices contributing a generator, sorted ascending.
    pub indices: Vec<usize>,
    /// `n x m`; column `j` is the model gradient of the `j`-th entry of
    /// `indices`.
    pub generators: DMatrix<f64>,
    /// `f_j(x)` for each entry.
    pub f_values: DVector<f64>,
    /// `max(0, f_j(x) - f(x))`.
    pub betas: DVector<f64>,
    /// `f(x) - f_j(x) + beta_j = max(0, f(x) - f_j(x))`, all nonnegative.
    pub offsets: DVector<f64>,
    pub f_center: f64,
}

impl GeneratorSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Bound gaps at a point, with infinite bounds masked out.
#[derive(Debug, Clone)]
pub struct BoundData {
    pub x: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    /// Coordinates with a finite lower bound.
    pub finite_lower: Vec<usize>,
    /// Coordinates with a finite upper bound.
    pub finite_upper: Vec<usize>,
    /// `max(0, x_i - l_i)` per finite-lower coordinate.
    pub lower_gap: Vec<f64>,
    /// `max(0, u_i - x_i)` per finite-upper coordinate.
    pub upper_gap: Vec<f64>,
}

impl BoundData {
    pub fn new(x: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> Result<Self> {
        let n = x.len();
        if lower.len() != n || upper.len() != n {
            return Err(Error::invalid("BoundData: dimension mismatch"));
        }
        let mut finite_lower = Vec::new();
        let mut finite_upper = Vec::new();
        let mut lower_gap = Vec::new();
        let mut upper_gap = Vec::new();
        for i in 0..n {
            if lower[i] > upper[i] {
                return Err(Error::invalid("BoundData: crossed bounds"));
            }
            if lower[i].is_finite() {
                finite_lower.push(i);
                lower_gap.push((x[i] - lower[i]).max(0.0));
            }
            if upper[i].is_finite() {
                finite_upper.push(i);
                upper_gap.push((upper[i] - x[i]).max(0.0));
            }
        }
        Ok(BoundData {
            x: x.clone(),
            lower: lower.clone(),
            upper: upper.clone(),
            finite_lower,
            finite_upper,
            lower_gap,
            upper_gap,
        })
    }
}

/// Solution of the trust-region subproblem.
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub s: DVector<f64>,
    /// Epigraph value `max_j { f_j + g_j^T s - beta_j }` at the cleaned `s`.
    pub v: f64,
    /// `f(x) - v - 0.5 s^T H s`, the decrease the model predicts.
    pub predicted_decrease: f64,
}

/// Stationarity measure and the multipliers attaining it.
#[derive(Debug, Clone)]
pub struct ChiResult {
    pub chi: f64,
    pub lambda_a: DVector<f64>,
    /// Per finite-lower coordinate, matching `BoundData::finite_lower`.
    pub lambda_l: Vec<f64>,
    /// Per finite-upper coordinate, matching `BoundData::finite_upper`.
    pub lambda_u: Vec<f64>,
    /// `G lambda_a - E_l lambda_l + E_u lambda_u`, the smoothed aggregate
    /// direction whose norm enters `chi`.
    pub g_agg: DVector<f64>,
}

/// Selection indices observed active at history points near `x`, with each
/// point admitted at radius `c2 * delta` when its piece does not exceed the
/// incumbent value and at the tighter `c1 * delta^2` when it does.
pub fn build_generator_set(
    history: &History,
    models: &ModelJacobian,
    h: &dyn Selection,
    x: &DVector<f64>,
    delta: f64,
    c1: f64,
    c2: f64,
) -> Result<GeneratorSet> {
    let center_idx = history
        .find(x)
        .ok_or_else(|| Error::MissingPrerequisite("generator set needs F(x) in history".into()))?;
    let center = &history.records[center_idx];
    let f_center = center.f;
    let fx = &center.fx;

    let wide = (c1 * delta * delta).max(c2 * delta);
    let mut indices: Vec<usize> = center.active.clone();
    for idx in history.points_within(x, wide) {
        let rec = &history.records[idx];
        let dist = (&rec.x - x).norm();
        for &j in &rec.active {
            if indices.contains(&j) {
                continue;
            }
            let f_j = h.selection_value(j, fx);
            let cap = if f_j > f_center {
                c1 * delta * delta
            } else {
                c2 * delta
            };
            if dist <= cap {
                indices.push(j);
            }
        }
    }
    indices.sort_unstable();
    indices.dedup();

    let m = indices.len();
    let n = models.n();
    let mut generators = DMatrix::zeros(n, m);
    let mut f_values = DVector::zeros(m);
    let mut betas = DVector::zeros(m);
    let mut offsets = DVector::zeros(m);
    for (col, &j) in indices.iter().enumerate() {
        let grad_h = h.selection_gradient(j, fx);
        generators.set_column(col, &(&models.gradients * grad_h));
        let f_j = h.selection_value(j, fx);
        f_values[col] = f_j;
        betas[col] = (f_j - f_center).max(0.0);
        offsets[col] = (f_center - f_j).max(0.0);
    }
    Ok(GeneratorSet {
        indices,
        generators,
        f_values,
        betas,
        offsets,
        f_center,
    })
}

/// `max_j { f_j + g_j^T s - beta_j } + 0.5 s^T H s - f(x)`.
pub fn evaluate_primal_model(
    gen: &GeneratorSet,
    hessian: Option<&DMatrix<f64>>,
    s: &DVector<f64>,
) -> f64 {
    epigraph_value(gen, s) + quad_term(hessian, s) - gen.f_center
}

fn epigraph_value(gen: &GeneratorSet, s: &DVector<f64>) -> f64 {
    (0..gen.len())
        .map(|j| gen.f_values[j] + gen.generators.column(j).dot(s) - gen.betas[j])
        .fold(f64::NEG_INFINITY, f64::max)
}

fn quad_term(hessian: Option<&DMatrix<f64>>, s: &DVector<f64>) -> f64 {
    hessian.map_or(0.0, |h| 0.5 * (h * s).dot(s))
}

/// Minimize the piecewise model over `{||s|| <= delta} ∩ {l <= x + s <= u}`.
///
/// `hessian`, when given, must be symmetric positive semidefinite. The
/// returned step is exactly feasible: it is clipped to the box, rescaled
/// into the ball, and its epigraph value recomputed.
pub fn solve_tr_subproblem(
    gen: &GeneratorSet,
    bounds: &BoundData,
    hessian: Option<&DMatrix<f64>>,
    delta: f64,
    tol: f64,
) -> Result<SubproblemSolution> {
    if !(tol > 0.0) {
        return Err(Error::invalid("solve_tr_subproblem: tol must be positive"));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::invalid("solve_tr_subproblem: delta must be positive"));
    }
    if gen.is_empty() {
        return Err(Error::invalid("solve_tr_subproblem: empty generator set"));
    }
    let n = bounds.x.len();
    let m = gen.len();
    if let Some(hm) = hessian {
        if hm.nrows() != n || hm.ncols() != n {
            return Err(Error::invalid("solve_tr_subproblem: Hessian shape"));
        }
        let sym_err = (hm - hm.transpose()).abs().max();
        if sym_err > 1e-10 * (1.0 + hm.abs().max()) {
            return Err(Error::SubproblemFailure("Hessian is not symmetric".into()));
        }
        let shifted = hm + DMatrix::identity(n, n) * 1e-10 * (1.0 + hm.abs().max());
        if shifted.cholesky().is_none() {
            return Err(Error::SubproblemFailure(
                "Hessian is not positive semidefinite".into(),
            ));
        }
    }

    // Variables u = (s, v). Objective 0.5 u^T P u + q^T u with P carrying H.
    let nv = n + 1;
    let mut p_dense = DMatrix::zeros(nv, nv);
    if let Some(hm) = hessian {
        p_dense.view_mut((0, 0), (n, n)).copy_from(hm);
    }
    let mut q = vec![0.0; nv];
    q[n] = 1.0;

    // Nonnegative rows: epigraph g_j^T s - v <= beta_j - f_j, then box rows.
    let mut a_rows: Vec<Vec<f64>> = Vec::new();
    let mut b = Vec::new();
    for j in 0..m {
        let mut row = vec![0.0; nv];
        for i in 0..n {
            row[i] = gen.generators[(i, j)];
        }
        row[n] = -1.0;
        a_rows.push(row);
        b.push(gen.betas[j] - gen.f_values[j]);
    }
    for (k, &i) in bounds.finite_lower.iter().enumerate() {
        let mut row = vec![0.0; nv];
        row[i] = -1.0;
        a_rows.push(row);
        b.push(bounds.lower_gap[k]);
    }
    for (k, &i) in bounds.finite_upper.iter().enumerate() {
        let mut row = vec![0.0; nv];
        row[i] = 1.0;
        a_rows.push(row);
        b.push(bounds.upper_gap[k]);
    }
    let nonneg_rows = a_rows.len();

    // Second-order cone: (delta, s).
    a_rows.push(vec![0.0; nv]);
    b.push(delta);
    for i in 0..n {
        let mut row = vec![0.0; nv];
        row[i] = -1.0;
        a_rows.push(row);
        b.push(0.0);
    }

    let cones = vec![
        SupportedConeT::NonnegativeConeT(nonneg_rows),
        SupportedConeT::SecondOrderConeT(n + 1),
    ];
    let u = solve_conic(&p_dense, &q, &a_rows, &b, &cones, tol)?;

    // Clean the step back onto the exact feasible set.
    let mut s = DVector::from_fn(n, |i, _| u[i]);
    for i in 0..n {
        s[i] = s[i].clamp(bounds.lower[i] - bounds.x[i], bounds.upper[i] - bounds.x[i]);
    }
    let nrm = s.norm();
    if nrm > delta {
        s *= delta / nrm;
    }
    let v = epigraph_value(gen, &s);
    let predicted_decrease = gen.f_center - v - quad_term(hessian, &s);
    // Near stationarity the conic iterate can predict a tiny increase; the
    // zero step is always feasible and never does.
    if predicted_decrease < 0.0 {
        let s0 = DVector::zeros(n);
        let v0 = epigraph_value(gen, &s0);
        if gen.f_center - v0 > predicted_decrease {
            return Ok(SubproblemSolution {
                s: s0,
                v: v0,
                predicted_decrease: gen.f_center - v0,
            });
        }
    }
    Ok(SubproblemSolution {
        s,
        v,
        predicted_decrease,
    })
}

/// Stationarity measure: the minimum over convex weights on the generators
/// and nonnegative bound multipliers of the aggregate-direction norm plus
/// the activity and bound-gap penalties. Zero certifies approximate
/// stationarity for the piecewise model at `x`.
pub fn solve_chi(gen: &GeneratorSet, bounds: &BoundData, tol: f64) -> Result<ChiResult> {
    if !(tol > 0.0) {
        return Err(Error::invalid("solve_chi: tol must be positive"));
    }
    if gen.is_empty() {
        return Err(Error::invalid("solve_chi: empty generator set"));
    }
    let n = bounds.x.len();
    let m = gen.len();
    let nl = bounds.finite_lower.len();
    let nu = bounds.finite_upper.len();

    // Variables u = (lambda_a, lambda_l, lambda_u, t).
    let nv = m + nl + nu + 1;
    let p_dense = DMatrix::zeros(nv, nv);
    let mut q = vec![0.0; nv];
    for j in 0..m {
        q[j] = gen.offsets[j];
    }
    for k in 0..nl {
        q[m + k] = bounds.lower_gap[k];
    }
    for k in 0..nu {
        q[m + nl + k] = bounds.upper_gap[k];
    }
    q[nv - 1] = 1.0;

    let mut a_rows: Vec<Vec<f64>> = Vec::new();
    let mut b = Vec::new();

    // Zero cone: sum(lambda_a) = 1.
    let mut row = vec![0.0; nv];
    for j in 0..m {
        row[j] = 1.0;
    }
    a_rows.push(row);
    b.push(1.0);

    // Nonnegativity of every multiplier.
    for k in 0..m + nl + nu {
        let mut row = vec![0.0; nv];
        row[k] = -1.0;
        a_rows.push(row);
        b.push(0.0);
    }

    // Second-order cone (t, G lambda_a - E_l lambda_l + E_u lambda_u).
    let mut row = vec![0.0; nv];
    row[nv - 1] = -1.0;
    a_rows.push(row);
    b.push(0.0);
    for i in 0..n {
        let mut row = vec![0.0; nv];
        for j in 0..m {
            row[j] = -gen.generators[(i, j)];
        }
        for (k, &ci) in bounds.finite_lower.iter().enumerate() {
            if ci == i {
                row[m + k] = 1.0;
            }
        }
        for (k, &ci) in bounds.finite_upper.iter().enumerate() {
            if ci == i {
                row[m + nl + k] = -1.0;
            }
        }
        a_rows.push(row);
        b.push(0.0);
    }

    let cones = vec![
        SupportedConeT::ZeroConeT(1),
        SupportedConeT::NonnegativeConeT(m + nl + nu),
        SupportedConeT::SecondOrderConeT(n + 1),
    ];
    let u = solve_conic(&p_dense, &q, &a_rows, &b, &cones, tol)?;

    // Clean: clamp multipliers to the nonnegative orthant, renormalize the
    // simplex block, and recompute chi at the cleaned point.
    let mut lambda_a = DVector::from_fn(m, |j, _| u[j].max(0.0));
    let sum = lambda_a.sum();
    if sum > 0.0 {
        lambda_a /= sum;
    } else {
        let jmin = (0..m)
            .min_by(|&a, &b| gen.offsets[a].total_cmp(&gen.offsets[b]))
            .unwrap();
        lambda_a[jmin] = 1.0;
    }
    let lambda_l: Vec<f64> = (0..nl).map(|k| u[m + k].max(0.0)).collect();
    let lambda_u: Vec<f64> = (0..nu).map(|k| u[m + nl + k].max(0.0)).collect();

    let mut g_agg = &gen.generators * &lambda_a;
    for (k, &i) in bounds.finite_lower.iter().enumerate() {
        g_agg[i] -= lambda_l[k];
    }
    for (k, &i) in bounds.finite_upper.iter().enumerate() {
        g_agg[i] += lambda_u[k];
    }
    let chi = g_agg.norm()
        + gen.offsets.dot(&lambda_a)
        + lambda_l
            .iter()
            .zip(&bounds.lower_gap)
            .map(|(l, g)| l * g)
            .sum::<f64>()
        + lambda_u
            .iter()
            .zip(&bounds.upper_gap)
            .map(|(l, g)| l * g)
            .sum::<f64>();
    Ok(ChiResult {
        chi,
        lambda_a,
        lambda_l,
        lambda_u,
        g_agg,
    })
}

/// Whether the step achieves the Cauchy-style fraction of the decrease that
/// the stationarity measure promises. `kappa_h == 0` removes the curvature
/// cap on the step length.
pub fn verify_cauchy_decrease(
    sol: &SubproblemSolution,
    chi: f64,
    delta: f64,
    kappa_fcd: f64,
    kappa_h: f64,
) -> bool {
    let curvature_cap = if kappa_h > 0.0 {
        chi / kappa_h
    } else {
        f64::INFINITY
    };
    let required = kappa_fcd * chi * curvature_cap.min(delta).min(1.0);
    sol.predicted_decrease >= required - 1e-12 * (1.0 + required.abs())
}

/// Euclidean projection onto `{||s|| <= delta} ∩ {l - x <= s <= u - x}` by
/// Dykstra's alternating scheme. Both sets are closed convex and their
/// intersection is nonempty whenever `x` is feasible.
pub fn project_ball_box(
    s: &DVector<f64>,
    delta: f64,
    x: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> DVector<f64> {
    let n = s.len();
    let box_lo = DVector::from_fn(n, |i, _| lower[i] - x[i]);
    let box_hi = DVector::from_fn(n, |i, _| upper[i] - x[i]);
    let proj_ball = |v: &DVector<f64>| {
        let nrm = v.norm();
        if nrm > delta {
            v * (delta / nrm)
        } else {
            v.clone()
        }
    };
    let proj_box =
        |v: &DVector<f64>| DVector::from_fn(n, |i, _| v[i].clamp(box_lo[i], box_hi[i]));

    let mut z = s.clone();
    let mut p = DVector::zeros(n);
    let mut q = DVector::zeros(n);
    for _ in 0..200 {
        let y = proj_ball(&(&z + &p));
        p = &z + &p - &y;
        let z_new = proj_box(&(&y + &q));
        q = &y + &q - &z_new;
        let delta_move = (&z_new - &z).norm();
        z = z_new;
        if delta_move <= 1e-14 * (1.0 + z.norm()) {
            break;
        }
    }
    // The box projection runs last, so z is always box feasible; nudge into
    // the ball in case Dykstra stopped one pass early.
    proj_box(&proj_ball(&z))
}

fn dense_to_csc(rows: &[Vec<f64>], ncols: usize) -> CscMatrix<f64> {
    let nrows = rows.len();
    let mut colptr = Vec::with_capacity(ncols + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for c in 0..ncols {
        for (r, row) in rows.iter().enumerate() {
            if row[c] != 0.0 {
                rowval.push(r);
                nzval.push(row[c]);
            }
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(nrows, ncols, colptr, rowval, nzval)
}

fn upper_triangle_csc(p: &DMatrix<f64>) -> CscMatrix<f64> {
    let n = p.ncols();
    let mut colptr = Vec::with_capacity(n + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for c in 0..n {
        for r in 0..=c {
            if p[(r, c)] != 0.0 {
                rowval.push(r);
                nzval.push(p[(r, c)]);
            }
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(n, n, colptr, rowval, nzval)
}

fn solve_conic(
    p_dense: &DMatrix<f64>,
    q: &[f64],
    a_rows: &[Vec<f64>],
    b: &[f64],
    cones: &[SupportedConeT<f64>],
    tol: f64,
) -> Result<Vec<f64>> {
    let nv = q.len();
    let p = upper_triangle_csc(p_dense);
    let a = dense_to_csc(a_rows, nv);
    let tol = tol.clamp(1e-12, 1e-4);
    let mut last_status = SolverStatus::Unsolved;
    let mut fallback: Option<Vec<f64>> = None;
    // Ill-scaled generator sets can defeat the tight tolerance; retry looser
    // before settling for an interrupted iterate. An inexact iterate is still
    // usable because callers clean solutions back onto the exact feasible set.
    for attempt_tol in [tol, tol.max(1e-6), 1e-4] {
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_gap_abs(attempt_tol)
            .tol_gap_rel(attempt_tol)
            .tol_feas(attempt_tol)
            .max_iter(200)
            .build()
            .map_err(|e| Error::Internal(format!("solver settings: {e}")))?;
        let mut solver = DefaultSolver::new(&p, q, &a, b, cones, settings);
        solver.solve();
        last_status = solver.solution.status;
        match last_status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                return Ok(solver.solution.x.clone())
            }
            SolverStatus::NumericalError
            | SolverStatus::InsufficientProgress
            | SolverStatus::MaxIterations
                if solver.solution.x.iter().all(|v| v.is_finite()) =>
            {
                fallback = Some(solver.solution.x.clone());
            }
            _ => {}
        }
    }
    fallback.ok_or_else(|| {
        Error::SubproblemFailure(format!("conic solve ended with status {last_status:?}"))
    })
}
