//! Componentwise linear models of `F` with a gradient-accuracy guarantee.
//!
//! [`build_models`] fits an affine model to each component of `F` from
//! history points near the incumbent. Interpolation points are chosen by
//! pivoted selection so their scaled displacements are well poised; when the
//! history cannot supply `n` independent directions, fresh geometry points
//! are evaluated along the orthogonal complement. The resulting gradients
//! satisfy `||grad F_i - g_i|| = O(radius)` on the trust region for smooth
//! `F`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::history::History;
use crate::problems::VectorMapping;
use crate::selections::Selection;

/// Knobs for interpolation-set construction.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    /// Points within `c_geo * radius` of the center are eligible.
    pub c_geo: f64,
    /// Minimum orthogonal component (in radius-scaled units) for a
    /// displacement to count as a new direction.
    pub pivot_rel: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            c_geo: 2.0,
            pivot_rel: 1e-7,
        }
    }
}

/// Affine models `m_i(center + s) = values_i + gradients_i^T s` for every
/// component of `F`, valid on a ball of the stored radius.
#[derive(Debug, Clone)]
pub struct ModelJacobian {
    pub center: DVector<f64>,
    /// `F(center)`.
    pub values: DVector<f64>,
    /// `n x p`; column `i` is the model gradient of `F_i`.
    pub gradients: DMatrix<f64>,
    pub radius: f64,
}

impl ModelJacobian {
    pub fn n(&self) -> usize {
        self.gradients.nrows()
    }

    pub fn p(&self) -> usize {
        self.gradients.ncols()
    }

    /// `M(center + s)`.
    pub fn predict(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.values + self.gradients.tr_mul(s)
    }
}

/// Build gradient-accurate componentwise linear models of `F` centered at
/// `center`, reusing history points where possible and evaluating new
/// geometry points (through `history`, so they are budgeted and cached)
/// where necessary.
#[allow(clippy::too_many_arguments)]
pub fn build_models(
    history: &mut History,
    mapping: &dyn VectorMapping,
    h: &dyn Selection,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    center: &DVector<f64>,
    radius: f64,
    cfg: &ModelConfig,
) -> Result<ModelJacobian> {
    let n = history.n;
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::invalid("build_models: radius must be positive"));
    }
    let center_idx = history.evaluate(mapping, h, center)?;
    let values = history.records[center_idx].fx.clone();

    // Greedy pivoted pass over nearby history points, closest first.
    let mut chosen: Vec<usize> = Vec::new();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for idx in history.points_within(center, cfg.c_geo * radius) {
        if idx == center_idx {
            continue;
        }
        let d = (&history.records[idx].x - center) / radius;
        if orth_component(&d, &basis).norm() >= cfg.pivot_rel {
            basis.push(orthonormalize(&d, &basis));
            chosen.push(idx);
            if basis.len() == n {
                break;
            }
        }
    }

    // Geometry improvement: fill missing directions with fresh evaluations
    // along the orthonormal complement, clipped to the box.
    if basis.len() < n {
        for v in complement_basis(&basis, n) {
            let step = clipped_step(center, &v, radius, lower, upper)?;
            let x_new = center + &step;
            let idx = history.evaluate(mapping, h, &x_new)?;
            let d = (&history.records[idx].x - center) / radius;
            if orth_component(&d, &basis).norm() < cfg.pivot_rel {
                return Err(Error::Internal(
                    "geometry point collapsed onto existing directions".into(),
                ));
            }
            basis.push(orthonormalize(&d, &basis));
            chosen.push(idx);
        }
    }

    // Augment with additional nearby points, up to 2n, for a regression fit.
    for idx in history.points_within(center, cfg.c_geo * radius) {
        if chosen.len() >= 2 * n {
            break;
        }
        if idx != center_idx && !chosen.contains(&idx) {
            chosen.push(idx);
        }
    }

    // Least-squares fit of scaled gradients: D * w = residuals.
    let m = chosen.len();
    let mut d_mat = DMatrix::zeros(m, n);
    let mut r_mat = DMatrix::zeros(m, history.p);
    for (row, &idx) in chosen.iter().enumerate() {
        let rec = &history.records[idx];
        d_mat.set_row(row, &((&rec.x - center) / radius).transpose());
        r_mat.set_row(row, &(&rec.fx - &values).transpose());
    }
    let svd = d_mat.svd(true, true);
    let w = svd
        .solve(&r_mat, 1e-12)
        .map_err(|e| Error::Internal(format!("model fit failed: {e}")))?;
    Ok(ModelJacobian {
        center: center.clone(),
        values,
        gradients: w / radius,
        radius,
    })
}

fn orth_component(d: &DVector<f64>, basis: &[DVector<f64>]) -> DVector<f64> {
    let mut r = d.clone();
    for b in basis {
        let coeff = b.dot(&r);
        r -= b * coeff;
    }
    r
}

fn orthonormalize(d: &DVector<f64>, basis: &[DVector<f64>]) -> DVector<f64> {
    // Two projection passes: a single pass leaves O(eps / |r|) of the span
    // in the result when the orthogonal component is small.
    let r = orth_component(&orth_component(d, basis), basis);
    let nrm = r.norm();
    r / nrm
}

/// An orthonormal basis of the complement of `span(basis)` in `R^n`.
fn complement_basis(basis: &[DVector<f64>], n: usize) -> Vec<DVector<f64>> {
    let mut full: Vec<DVector<f64>> = basis.to_vec();
    let mut out = Vec::new();
    for i in 0..n {
        if full.len() == n {
            break;
        }
        let e = DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 });
        let r = orth_component(&orth_component(&e, &full), &full);
        // Keep only residuals clearly outside the span; cancellation noise
        // can survive projection with a tiny but nonzero norm.
        if r.norm() > 1e-8 {
            let b = r.clone() / r.norm();
            full.push(b.clone());
            out.push(b);
        }
    }
    out
}

/// Step of length at most `radius` along `v` (or `-v`) from `center`, kept
/// inside the box. Prefers the sign retaining more than half the length.
fn clipped_step(
    center: &DVector<f64>,
    v: &DVector<f64>,
    radius: f64,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> Result<DVector<f64>> {
    let attempt = |sign: f64| -> DVector<f64> {
        let raw = center + v * (sign * radius);
        let clamped = DVector::from_fn(center.len(), |i, _| raw[i].clamp(lower[i], upper[i]));
        clamped - center
    };
    let plus = attempt(1.0);
    if plus.norm() > 0.5 * radius {
        return Ok(plus);
    }
    let minus = attempt(-1.0);
    let best = if minus.norm() > plus.norm() { minus } else { plus };
    if best.norm() <= 1e-10 * radius {
        return Err(Error::Internal(
            "bounds leave no room for a geometry point".into(),
        ));
    }
    Ok(best)
}
