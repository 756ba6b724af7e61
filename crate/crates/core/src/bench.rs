//! Post-hoc benchmark scoring: approximate stationarity at trace points via
//! sampled gradient bundles, first-solved budgets, and data profiles.
//!
//! Scoring is the one place the true Jacobian of `F` is consulted; the
//! solvers under test never see it. For a candidate point the scorer
//! samples a small ball, collects the gradients of every selection piece
//! active at any sample, prices each piece by how far it sits below the
//! candidate's value, and evaluates the same bound-aware stationarity
//! measure the solvers use internally.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::BenchmarkJacobian;
use crate::selections::{Selection, DEFAULT_ACTIVITY_TOL};
use crate::solvers::RunTrace;
use crate::subproblems::{solve_chi, BoundData, GeneratorSet};

/// Radius of the sampling ball around a scored point, and the cutoff for
/// pulling trace points into the bundle.
pub const SAMPLE_RADIUS: f64 = 1e-5;

/// Number of uniform ball samples per scored point.
pub const SAMPLE_COUNT: usize = 50;

/// Gradients and offsets gathered around one scored point.
#[derive(Debug, Clone)]
pub struct StationarityBundle {
    /// `n x m`; one column per (sample, active piece) pair.
    pub gradients: DMatrix<f64>,
    /// `max(0, f(x_t) - h_j(F(s)))` per column.
    pub offsets: DVector<f64>,
    pub f_center: f64,
}

fn ball_sample(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> DVector<f64> {
    // Gaussian direction, radius scaled for uniformity in the ball.
    let mut d = DVector::from_fn(n, |_, _| {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        (-2.0 * u1.ln()).sqrt() * u2.cos()
    });
    let nrm = d.norm();
    if nrm > 0.0 {
        d /= nrm;
    }
    let u: f64 = rng.gen_range(0.0f64..1.0);
    d * (radius * u.powf(1.0 / n as f64))
}

/// Build the sampled gradient bundle for `x_t`. `nearby` carries extra
/// points (from the run trace) already known to lie within
/// [`SAMPLE_RADIUS`] of `x_t`.
pub fn build_bundle(
    problem: &dyn BenchmarkJacobian,
    h: &dyn Selection,
    x_t: &DVector<f64>,
    nearby: &[DVector<f64>],
    seed: u64,
) -> Result<StationarityBundle> {
    let n = problem.input_dim();
    if x_t.len() != n {
        return Err(Error::invalid("build_bundle: dimension mismatch"));
    }
    let f_center = h.value(&problem.eval(x_t));
    if !f_center.is_finite() {
        return Err(Error::EvaluationFailure {
            point: x_t.iter().cloned().collect(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<DVector<f64>> = vec![x_t.clone()];
    for _ in 0..SAMPLE_COUNT {
        points.push(x_t + ball_sample(&mut rng, n, SAMPLE_RADIUS));
    }
    points.extend(nearby.iter().cloned());

    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut offsets: Vec<f64> = Vec::new();
    for s in &points {
        let z = problem.eval(s);
        if z.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let jac = problem.jacobian(s);
        for j in h.active_indices(&z, DEFAULT_ACTIVITY_TOL) {
            cols.push(jac.tr_mul(&h.selection_gradient(j, &z)));
            offsets.push((f_center - h.selection_value(j, &z)).max(0.0));
        }
    }
    let m = cols.len();
    if m == 0 {
        return Err(Error::Internal("stationarity bundle came up empty".into()));
    }
    let mut gradients = DMatrix::zeros(n, m);
    for (c, col) in cols.iter().enumerate() {
        gradients.set_column(c, col);
    }
    Ok(StationarityBundle {
        gradients,
        offsets: DVector::from_vec(offsets),
        f_center,
    })
}

/// Stationarity measure of `x_t` with respect to the sampled bundle and the
/// problem bounds. Zero means no descent direction survives the bounds.
pub fn score_stationarity(
    problem: &dyn BenchmarkJacobian,
    h: &dyn Selection,
    x_t: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    nearby: &[DVector<f64>],
    seed: u64,
) -> Result<f64> {
    let bundle = build_bundle(problem, h, x_t, nearby, seed)?;
    let m = bundle.offsets.len();
    let gen = GeneratorSet {
        indices: (0..m).collect(),
        generators: bundle.gradients,
        f_values: DVector::from_fn(m, |j, _| bundle.f_center - bundle.offsets[j]),
        betas: DVector::zeros(m),
        offsets: bundle.offsets,
        f_center: bundle.f_center,
    };
    let bounds = BoundData::new(x_t, lower, upper)?;
    Ok(solve_chi(&gen, &bounds, 1e-9)?.chi)
}

/// Scan a run trace in evaluation order and return the index (number of
/// evaluations spent, 1-based) after which the incumbent first scores
/// `chi <= tau`. Stationarity is recomputed only when the incumbent moves.
pub fn first_solved_eval(
    problem: &dyn BenchmarkJacobian,
    h: &dyn Selection,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    trace: &RunTrace,
    tau: f64,
    seed: u64,
) -> Result<Option<usize>> {
    if !(tau > 0.0) {
        return Err(Error::invalid("first_solved_eval: tau must be positive"));
    }
    let all_points: Vec<DVector<f64>> = trace
        .evals
        .iter()
        .map(|e| DVector::from_column_slice(&e.x))
        .collect();
    let mut best = f64::INFINITY;
    for (k, row) in trace.evals.iter().enumerate() {
        if row.f >= best {
            continue;
        }
        best = row.f;
        let x_t = &all_points[k];
        let nearby: Vec<DVector<f64>> = all_points
            .iter()
            .enumerate()
            .filter(|(i, p)| *i != k && (*p - x_t).norm() <= SAMPLE_RADIUS)
            .map(|(_, p)| p.clone())
            .collect();
        let chi = score_stationarity(problem, h, x_t, lower, upper, &nearby, seed)?;
        if chi <= tau {
            return Ok(Some(row.eval_index + 1));
        }
    }
    Ok(None)
}

/// One problem's scoring outcome feeding a data profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub instance_id: String,
    /// Decision-space dimension `n` of the instance.
    pub dimension: usize,
    /// Evaluations spent when first solved, if ever.
    pub solved_at: Option<usize>,
}

/// A data-profile step curve: fraction of instances solved within
/// `alpha * (n + 1)` evaluations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub method: String,
    pub tau: f64,
    /// `(alpha, fraction)` vertices of the step function, sorted by alpha.
    pub points: Vec<(f64, f64)>,
}

/// Build the data profile for one method at one tolerance.
pub fn data_profile(
    method: &str,
    tau: f64,
    entries: &[ProfileEntry],
    alpha_max: f64,
) -> ProfileCurve {
    let total = entries.len().max(1) as f64;
    let mut ts: Vec<f64> = entries
        .iter()
        .filter_map(|e| e.solved_at.map(|t| t as f64 / (e.dimension as f64 + 1.0)))
        .filter(|t| *t <= alpha_max)
        .collect();
    ts.sort_by(f64::total_cmp);
    let mut points = vec![(0.0, 0.0)];
    let mut frac = 0.0;
    for t in ts {
        frac += 1.0 / total;
        points.push((t, frac));
    }
    points.push((alpha_max, frac));
    ProfileCurve {
        method: method.to_string(),
        tau,
        points,
    }
}

/// Render profile curves as CSV with one `(method, alpha, fraction)` row
/// per vertex.
pub fn profiles_to_csv(curves: &[ProfileCurve]) -> String {
    let mut out = String::from("method,tau,alpha,fraction\n");
    for c in curves {
        for (alpha, frac) in &c.points {
            out.push_str(&format!("{},{},{},{}\n", c.method, c.tau, alpha, frac));
        }
    }
    out
}

const SVG_COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Render profile curves as a standalone SVG line chart.
pub fn profiles_to_svg(curves: &[ProfileCurve], alpha_max: f64) -> String {
    let (w, h) = (640.0, 420.0);
    let (ml, mr, mt, mb) = (60.0, 20.0, 30.0, 50.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);
    let sx = |alpha: f64| ml + pw * (alpha / alpha_max).clamp(0.0, 1.0);
    let sy = |frac: f64| mt + ph * (1.0 - frac.clamp(0.0, 1.0));

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + ph,
        ml + pw,
        mt + ph,
        mt + ph
    ));
    for k in 0..=5 {
        let frac = k as f64 / 5.0;
        let alpha = alpha_max * frac;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{:.0}</text>\n",
            sx(alpha),
            mt + ph + 18.0,
            alpha
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.1}</text>\n",
            ml - 8.0,
            sy(frac) + 4.0,
            frac
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">evaluations / (n + 1)</text>\n\
         <text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">\
         fraction solved</text>\n",
        ml + pw / 2.0,
        h - 12.0,
        mt + ph / 2.0,
        mt + ph / 2.0
    ));

    for (ci, curve) in curves.iter().enumerate() {
        let color = SVG_COLORS[ci % SVG_COLORS.len()];
        let mut d = String::new();
        let mut prev_y: Option<f64> = None;
        for &(alpha, frac) in &curve.points {
            let (px, py) = (sx(alpha), sy(frac));
            match prev_y {
                None => d.push_str(&format!("M {px:.2} {py:.2}")),
                Some(y) => d.push_str(&format!(" L {px:.2} {y:.2} L {px:.2} {py:.2}")),
            }
            prev_y = Some(py);
        }
        svg.push_str(&format!(
            "<path d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n"
        ));
        let ly = mt + 16.0 + 16.0 * ci as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" \
             stroke-width=\"1.8\"/>\n<text x=\"{}\" y=\"{}\">{}</text>\n",
            ml + pw - 150.0,
            ml + pw - 120.0,
            ml + pw - 112.0,
            ly + 4.0,
            curve.method
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
