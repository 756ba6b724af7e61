//! Continuous selections: outer functions `h` that everywhere equal one of a
//! finite family of smooth selection pieces `h_j`, with computable
//! (essentially) active index sets.
//!
//! Four benchmark mappings are provided:
//!
//! * `h1(z) = min_i z_i^2` — [`MinSquares`]
//! * `h2(z) = max_i z_i^2` — [`MaxSquares`]
//! * `h3(z) = sum_i |d_i - max(z_i, c_i)|` — [`CensoredL1`]
//! * `h4(z) = max_i (z - z_i)' Q_i (z - z_i) + b_i` — [`PiecewiseMaxQuad`]
//!
//! plus [`MaxAffine`], a generic pointwise maximum of affine pieces used in
//! tests and for simple compositions such as `|x| = max{x, -x}`.
//!
//! Indices are 0-based throughout.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance used when detecting active selection pieces.
pub const DEFAULT_ACTIVITY_TOL: f64 = 1e-8;

/// A continuous selection `h(z) = h_j(z)` for some piece `j` at every `z`.
///
/// Implementations must guarantee:
/// * `value(z) == selection_value(j, z)` for every `j` in
///   `active_indices(z, 0.0)`;
/// * `active_indices(z, tol)` is nonempty and monotone in `tol`.
pub trait Selection: Sync {
    /// Dimension `p` of the domain of `h`.
    fn input_dim(&self) -> usize;

    /// Number of selection pieces currently addressable by index. For
    /// lazily materialized families (h3) this grows as new branch
    /// combinations are observed.
    fn num_selections(&self) -> usize;

    /// `h(z)`.
    fn value(&self, z: &DVector<f64>) -> f64;

    /// `h_j(z)`, defined (smoothly) for all `z`, not only where piece `j`
    /// is active.
    fn selection_value(&self, j: usize, z: &DVector<f64>) -> f64;

    /// `∇h_j(z)`.
    fn selection_gradient(&self, j: usize, z: &DVector<f64>) -> DVector<f64>;

    /// Indices of pieces whose value matches `h(z)` within
    /// `tol * (1 + |h(z)|)`.
    fn active_indices(&self, z: &DVector<f64>, tol: f64) -> Vec<usize>;
}

/// Evaluates `h(z)` together with its active set at the default tolerance.
pub fn evaluate_h(h: &dyn Selection, z: &DVector<f64>) -> Result<(f64, Vec<usize>)> {
    if z.len() != h.input_dim() {
        return Err(Error::invalid(format!(
            "expected a point of dimension {}, got {}",
            h.input_dim(),
            z.len()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite entry in selection input"));
    }
    let v = h.value(z);
    let active = h.active_indices(z, DEFAULT_ACTIVITY_TOL);
    Ok((v, active))
}

/// Checked selection-gradient access.
pub fn selection_gradient(h: &dyn Selection, j: usize, z: &DVector<f64>) -> Result<DVector<f64>> {
    if j >= h.num_selections() {
        return Err(Error::invalid(format!(
            "selection index {} out of range (have {})",
            j,
            h.num_selections()
        )));
    }
    if z.len() != h.input_dim() {
        return Err(Error::invalid("dimension mismatch in selection_gradient"));
    }
    Ok(h.selection_gradient(j, z))
}

fn argmin_like_active(values: &[f64], best: f64, tol: f64) -> Vec<usize> {
    let thresh = tol * (1.0 + best.abs());
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| (v - best).abs() <= thresh)
        .map(|(i, _)| i)
        .collect()
}

/// `h1(z) = min_i z_i^2`; piece `j` is `z_j^2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinSquares {
    pub p: usize,
}

impl Selection for MinSquares {
    fn input_dim(&self) -> usize {
        self.p
    }
    fn num_selections(&self) -> usize {
        self.p
    }
    fn value(&self, z: &DVector<f64>) -> f64 {
        z.iter().map(|v| v * v).fold(f64::INFINITY, f64::min)
    }
    fn selection_value(&self, j: usize, z: &DVector<f64>) -> f64 {
        z[j] * z[j]
    }
    fn selection_gradient(&self, j: usize, z: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.p);
        g[j] = 2.0 * z[j];
        g
    }
    fn active_indices(&self, z: &DVector<f64>, tol: f64) -> Vec<usize> {
        let sq: Vec<f64> = z.iter().map(|v| v * v).collect();
        let best = self.value(z);
        argmin_like_active(&sq, best, tol)
    }
}

/// `h2(z) = max_i z_i^2`; piece `j` is `z_j^2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxSquares {
    pub p: usize,
}

impl Selection for MaxSquares {
    fn input_dim(&self) -> usize {
        self.p
    }
    fn num_selections(&self) -> usize {
        self.p
    }
    fn value(&self, z: &DVector<f64>) -> f64 {
        z.iter().map(|v| v * v).fold(f64::NEG_INFINITY, f64::max)
    }
    fn selection_value(&self, j: usize, z: &DVector<f64>) -> f64 {
        z[j] * z[j]
    }
    fn selection_gradient(&self, j: usize, z: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.p);
        g[j] = 2.0 * z[j];
        g
    }
    fn active_indices(&self, z: &DVector<f64>, tol: f64) -> Vec<usize> {
        let sq: Vec<f64> = z.iter().map(|v| v * v).collect();
        let best = self.value(z);
        argmin_like_active(&sq, best, tol)
    }
}

/// Parameters of a censored-L1 instance: `h3(z) = sum_i |d_i - max(z_i, c_i)|`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CensoredL1Instance {
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub seed: u64,
}

impl CensoredL1Instance {
    /// Seeded generator with censors `c_i ~ U(-1,1)` and targets
    /// `d_i ~ U(-0.5, 0.5)`.
    pub fn generate(p: usize, seed: u64) -> Result<Self> {
        Self::generate_anchored(&vec![0.0; p], seed)
    }

    /// Seeded generator anchored at an observed output `F(x0)`: censors are
    /// scaled by `max(1, |F(x0)|_inf)` and targets sit near the components
    /// of `F(x0)`, so the composition is genuinely nonsmooth near the start.
    pub fn generate_anchored(fx0: &[f64], seed: u64) -> Result<Self> {
        let p = fx0.len();
        if p == 0 {
            return Err(Error::invalid("h3 instance needs p >= 1"));
        }
        if fx0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite anchor for h3 instance"));
        }
        let scale = fx0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
        let d: Vec<f64> = (0..p)
            .map(|i| fx0[i] + rng.gen_range(-0.5..0.5))
            .collect();
        Ok(CensoredL1Instance { c, d, seed })
    }
}

/// Per-coordinate branch of one censored-L1 term `|d_i - max(z_i, c_i)|`.
///
/// * `Censored`: `z_i <= c_i`, term is the constant `|d_i - c_i|`
/// * `Under`: `z_i >= c_i` and `z_i <= d_i`, term is `d_i - z_i`
/// * `Over`: `z_i >= c_i` and `z_i >= d_i`, term is `z_i - d_i`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Branch {
    Censored,
    Under,
    Over,
}

const BRANCHES: [Branch; 3] = [Branch::Censored, Branch::Under, Branch::Over];

/// Cap on simultaneously detected branch combinations; beyond it the active
/// set is truncated (deterministically, exactly-active combination first).
const MAX_ACTIVE_COMBOS: usize = 128;

#[derive(Default)]
struct BranchTable {
    by_code: HashMap<Vec<u8>, usize>,
    codes: Vec<Vec<u8>>,
}

impl BranchTable {
    fn intern(&mut self, code: Vec<u8>) -> usize {
        if let Some(&j) = self.by_code.get(&code) {
            return j;
        }
        let j = self.codes.len();
        self.by_code.insert(code.clone(), j);
        self.codes.push(code);
        j
    }
}

/// `h3`, the censored-L1 loss. Selection pieces are affine functions indexed
/// by a per-coordinate branch vector; with `3^p` potential pieces the family
/// is materialized lazily, interning only branch combinations realized at
/// queried points. Interning is synchronized, so concurrent reads are safe.
pub struct CensoredL1 {
    pub instance: CensoredL1Instance,
    table: Mutex<BranchTable>,
}

impl CensoredL1 {
    pub fn new(instance: CensoredL1Instance) -> Self {
        CensoredL1 {
            instance,
            table: Mutex::new(BranchTable::default()),
        }
    }

    fn term(&self, i: usize, b: Branch, z: &DVector<f64>) -> f64 {
        let (c, d) = (self.instance.c[i], self.instance.d[i]);
        match b {
            Branch::Censored => (d - c).abs(),
            Branch::Under => d - z[i],
            Branch::Over => z[i] - d,
        }
    }

    fn term_slope(&self, b: Branch) -> f64 {
        match b {
            Branch::Censored => 0.0,
            Branch::Under => -1.0,
            Branch::Over => 1.0,
        }
    }

    /// The branch realized by `max`/`abs` at `z_i` (ties resolved toward
    /// `Censored`, then `Under`; the tolerance-based active set catches the
    /// other branches of a tie).
    fn realized_branch(&self, i: usize, z: &DVector<f64>) -> Branch {
        let (c, d) = (self.instance.c[i], self.instance.d[i]);
        if z[i] <= c {
            Branch::Censored
        } else if z[i] <= d {
            Branch::Under
        } else {
            Branch::Over
        }
    }

    fn code(b: Branch) -> u8 {
        match b {
            Branch::Censored => 0,
            Branch::Under => 1,
            Branch::Over => 2,
        }
    }

    fn decode(c: u8) -> Branch {
        BRANCHES[c as usize]
    }
}

impl Selection for CensoredL1 {
    fn input_dim(&self) -> usize {
        self.instance.c.len()
    }

    fn num_selections(&self) -> usize {
        self.table.lock().unwrap().codes.len()
    }

    fn value(&self, z: &DVector<f64>) -> f64 {
        let p = self.input_dim();
        (0..p)
            .map(|i| (self.instance.d[i] - z[i].max(self.instance.c[i])).abs())
            .sum()
    }

    fn selection_value(&self, j: usize, z: &DVector<f64>) -> f64 {
        let code = self.table.lock().unwrap().codes[j].clone();
        code.iter()
            .enumerate()
            .map(|(i, &b)| self.term(i, Self::decode(b), z))
            .sum()
    }

    fn selection_gradient(&self, j: usize, _z: &DVector<f64>) -> DVector<f64> {
        let code = self.table.lock().unwrap().codes[j].clone();
        DVector::from_iterator(
            code.len(),
            code.iter().map(|&b| self.term_slope(Self::decode(b))),
        )
    }

    fn active_indices(&self, z: &DVector<f64>, tol: f64) -> Vec<usize> {
        let p = self.input_dim();
        let value = self.value(z);
        // Per-coordinate slack so that the summed piece value stays within
        // tol*(1+|h(z)|) of h(z) even when several coordinates tie at once.
        let per_coord = tol * (1.0 + value.abs()) / p as f64;

        // Branch options per coordinate, realized branch listed first.
        let mut options: Vec<Vec<Branch>> = Vec::with_capacity(p);
        for i in 0..p {
            let realized = self.realized_branch(i, z);
            let actual = self.term(i, realized, z);
            let mut opts = vec![realized];
            for b in BRANCHES {
                if b != realized && (self.term(i, b, z) - actual).abs() <= per_coord {
                    opts.push(b);
                }
            }
            options.push(opts);
        }

        // Cartesian product in a deterministic order, capped.
        let mut combos: Vec<Vec<u8>> = vec![Vec::new()];
        for opts in &options {
            let mut next = Vec::with_capacity(combos.len() * opts.len());
            'outer: for prefix in &combos {
                for &b in opts {
                    if next.len() >= MAX_ACTIVE_COMBOS {
                        break 'outer;
                    }
                    let mut code = prefix.clone();
                    code.push(Self::code(b));
                    next.push(code);
                }
            }
            combos = next;
        }

        let mut table = self.table.lock().unwrap();
        combos.into_iter().map(|code| table.intern(code)).collect()
    }
}

/// Parameters of a piecewise-quadratic instance:
/// `h4(z) = max_i (z - z_i)' Q_i (z - z_i) + b_i`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PiecewiseQuadraticInstance {
    pub q: Vec<DMatrix<f64>>,
    pub centers: Vec<DVector<f64>>,
    pub b: Vec<f64>,
    pub seed: u64,
}

impl PiecewiseQuadraticInstance {
    /// Seeded generator of `l` positive-definite quadratics.
    pub fn generate(p: usize, l: usize, seed: u64) -> Result<Self> {
        Self::generate_anchored(&vec![0.0; p], l, seed)
    }

    /// Seeded generator anchored at `F(x0)`: centers scatter around the
    /// anchor and the offsets `b_i` are chosen so that all pieces tie at the
    /// anchor, making the composition nonsmooth at the starting point.
    pub fn generate_anchored(fx0: &[f64], l: usize, seed: u64) -> Result<Self> {
        let p = fx0.len();
        if p == 0 || l == 0 {
            return Err(Error::invalid("h4 instance needs p >= 1 and l >= 1"));
        }
        if fx0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite anchor for h4 instance"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = |rng: &mut ChaCha8Rng| {
            // Box-Muller; two uniforms per draw keeps the stream simple.
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        let anchor = DVector::from_column_slice(fx0);
        let mut q = Vec::with_capacity(l);
        let mut centers = Vec::with_capacity(l);
        for _ in 0..l {
            let a = DMatrix::from_fn(p, p, |_, _| normal(&mut rng) / (p as f64).sqrt());
            q.push(a.transpose() * &a + DMatrix::identity(p, p) * 0.1);
            centers.push(DVector::from_fn(p, |i, _| anchor[i] + normal(&mut rng)));
        }
        // Tie all pieces at the anchor.
        let raw: Vec<f64> = (0..l)
            .map(|i| {
                let dz = &anchor - &centers[i];
                (dz.transpose() * &q[i] * &dz)[(0, 0)]
            })
            .collect();
        let top = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let b = raw.iter().map(|v| top - v).collect();
        Ok(PiecewiseQuadraticInstance {
            q,
            centers,
            b,
            seed,
        })
    }
}

/// `h4`, a pointwise maximum of quadratics.
#[derive(Debug, Clone)]
pub struct PiecewiseMaxQuad {
    pub instance: PiecewiseQuadraticInstance,
}

impl PiecewiseMaxQuad {
    pub fn new(instance: PiecewiseQuadraticInstance) -> Self {
        PiecewiseMaxQuad { instance }
    }
}

impl Selection for PiecewiseMaxQuad {
    fn input_dim(&self) -> usize {
        self.instance.centers[0].len()
    }
    fn num_selections(&self) -> usize {
        self.instance.q.len()
    }
    fn value(&self, z: &DVector<f64>) -> f64 {
        (0..self.num_selections())
            .map(|j| self.selection_value(j, z))
            .fold(f64::NEG_INFINITY, f64::max)
    }
    fn selection_value(&self, j: usize, z: &DVector<f64>) -> f64 {
        let dz = z - &self.instance.centers[j];
        (dz.transpose() * &self.instance.q[j] * &dz)[(0, 0)] + self.instance.b[j]
    }
    fn selection_gradient(&self, j: usize, z: &DVector<f64>) -> DVector<f64> {
        let dz = z - &self.instance.centers[j];
        (&self.instance.q[j] + self.instance.q[j].transpose()) * dz
    }
    fn active_indices(&self, z: &DVector<f64>, tol: f64) -> Vec<usize> {
        let vals: Vec<f64> = (0..self.num_selections())
            .map(|j| self.selection_value(j, z))
            .collect();
        let best = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        argmin_like_active(&vals, best, tol)
    }
}

/// Pointwise maximum of affine pieces, `h(z) = max_j w_j' z + b_j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxAffine {
    pub weights: Vec<DVector<f64>>,
    pub offsets: Vec<f64>,
}

impl MaxAffine {
    /// `|z|` in one dimension: `max{z, -z}`.
    pub fn abs_1d() -> Self {
        MaxAffine {
            weights: vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
            offsets: vec![0.0, 0.0],
        }
    }

    /// The identity in one dimension (a single linear piece).
    pub fn identity_1d() -> Self {
        MaxAffine {
            weights: vec![DVector::from_element(1, 1.0)],
            offsets: vec![0.0],
        }
    }
}

impl Selection for MaxAffine {
    fn input_dim(&self) -> usize {
        self.weights[0].len()
    }
    fn num_selections(&self) -> usize {
        self.weights.len()
    }
    fn value(&self, z: &DVector<f64>) -> f64 {
        (0..self.num_selections())
            .map(|j| self.selection_value(j, z))
            .fold(f64::NEG_INFINITY, f64::max)
    }
    fn selection_value(&self, j: usize, z: &DVector<f64>) -> f64 {
        self.weights[j].dot(z) + self.offsets[j]
    }
    fn selection_gradient(&self, j: usize, _z: &DVector<f64>) -> DVector<f64> {
        self.weights[j].clone()
    }
    fn active_indices(&self, z: &DVector<f64>, tol: f64) -> Vec<usize> {
        let vals: Vec<f64> = (0..self.num_selections())
            .map(|j| self.selection_value(j, z))
            .collect();
        let best = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        argmin_like_active(&vals, best, tol)
    }
}

/// Serializable description of a selection, sufficient to reconstruct a
/// benchmark run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SelectionSpec {
    H1 { p: usize },
    H2 { p: usize },
    H3(CensoredL1Instance),
    H4(PiecewiseQuadraticInstance),
    MaxAffine(MaxAffine),
}

impl SelectionSpec {
    pub fn build(&self) -> Box<dyn Selection> {
        match self {
            SelectionSpec::H1 { p } => Box::new(MinSquares { p: *p }),
            SelectionSpec::H2 { p } => Box::new(MaxSquares { p: *p }),
            SelectionSpec::H3(inst) => Box::new(CensoredL1::new(inst.clone())),
            SelectionSpec::H4(inst) => Box::new(PiecewiseMaxQuad::new(inst.clone())),
            SelectionSpec::MaxAffine(ma) => Box::new(ma.clone()),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            SelectionSpec::H1 { p } | SelectionSpec::H2 { p } => *p,
            SelectionSpec::H3(inst) => inst.c.len(),
            SelectionSpec::H4(inst) => inst.centers[0].len(),
            SelectionSpec::MaxAffine(ma) => ma.weights[0].len(),
        }
    }
}
