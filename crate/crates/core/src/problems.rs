//! Benchmark inner mappings `F: R^n -> R^p`, starting points, bound
//! generation, and benchmark-instance assembly.
//!
//! The suite is a Moré–Wild-style collection of smooth vector mappings with
//! analytic Jacobians. Jacobians live behind [`BenchmarkJacobian`], a
//! separate trait that the solvers never require, so derivative information
//! cannot leak into a solver by accident.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selections::{CensoredL1Instance, PiecewiseQuadraticInstance, SelectionSpec};

/// A vector mapping evaluated by the solvers.
pub trait VectorMapping: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;
}

/// Analytic Jacobian access, for benchmarking only.
pub trait BenchmarkJacobian: VectorMapping {
    /// The `p x n` Jacobian of `F` at `x`.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// Suite members, identified by name.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family")]
pub enum MappingKind {
    Rosenbrock,
    FreudensteinRoth,
    Beale,
    HelicalValley,
    Bard,
    Gaussian,
    Box3d,
    PowellSingular,
    Wood,
    Trigonometric { n: usize },
    ExtendedRosenbrock { n: usize },
    BrownAlmostLinear { n: usize },
    LinearFullRank { n: usize, p: usize },
}

/// Scaled polar angle with its branch cut on the `x1 = 0` half-plane rather
/// than the negative axis, so it is smooth at the helical-valley start.
fn helical_theta(x1: f64, x2: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    if x1 > 0.0 {
        (x2 / x1).atan() / tau
    } else if x1 < 0.0 {
        (x2 / x1).atan() / tau + 0.5
    } else {
        0.25 * x2.signum()
    }
}

const BARD_Y: [f64; 15] = [
    0.14, 0.18, 0.22, 0.25, 0.29, 0.32, 0.35, 0.39, 0.37, 0.58, 0.73, 0.96, 1.34, 2.10, 4.39,
];

const GAUSSIAN_Y: [f64; 15] = [
    0.0009, 0.0044, 0.0175, 0.0540, 0.1295, 0.2420, 0.3521, 0.3989, 0.3521, 0.2420, 0.1295,
    0.0540, 0.0175, 0.0044, 0.0009,
];

impl MappingKind {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            MappingKind::Rosenbrock => (2, 2),
            MappingKind::FreudensteinRoth => (2, 2),
            MappingKind::Beale => (2, 3),
            MappingKind::HelicalValley => (3, 3),
            MappingKind::Bard => (3, 15),
            MappingKind::Gaussian => (3, 15),
            MappingKind::Box3d => (3, 10),
            MappingKind::PowellSingular => (4, 4),
            MappingKind::Wood => (4, 6),
            MappingKind::Trigonometric { n } => (*n, *n),
            MappingKind::ExtendedRosenbrock { n } => (*n, *n),
            MappingKind::BrownAlmostLinear { n } => (*n, *n),
            MappingKind::LinearFullRank { n, p } => (*n, *p),
        }
    }

    pub fn standard_start(&self) -> DVector<f64> {
        match self {
            MappingKind::Rosenbrock => DVector::from_column_slice(&[-1.2, 1.0]),
            MappingKind::FreudensteinRoth => DVector::from_column_slice(&[0.5, -2.0]),
            MappingKind::Beale => DVector::from_column_slice(&[1.0, 1.0]),
            MappingKind::HelicalValley => DVector::from_column_slice(&[-1.0, 0.0, 0.0]),
            MappingKind::Bard => DVector::from_element(3, 1.0),
            MappingKind::Gaussian => DVector::from_column_slice(&[0.4, 1.0, 0.0]),
            MappingKind::Box3d => DVector::from_column_slice(&[0.0, 10.0, 20.0]),
            MappingKind::PowellSingular => DVector::from_column_slice(&[3.0, -1.0, 0.0, 1.0]),
            MappingKind::Wood => DVector::from_column_slice(&[-3.0, -1.0, -3.0, -1.0]),
            MappingKind::Trigonometric { n } => DVector::from_element(*n, 1.0 / *n as f64),
            MappingKind::ExtendedRosenbrock { n } => {
                DVector::from_fn(*n, |i, _| if i % 2 == 0 { -1.2 } else { 1.0 })
            }
            MappingKind::BrownAlmostLinear { n } => DVector::from_element(*n, 0.5),
            MappingKind::LinearFullRank { n, .. } => DVector::from_element(*n, 1.0),
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let (_, p) = self.dims();
        match self {
            MappingKind::Rosenbrock => DVector::from_column_slice(&[
                10.0 * (x[1] - x[0] * x[0]),
                1.0 - x[0],
            ]),
            MappingKind::FreudensteinRoth => DVector::from_column_slice(&[
                -13.0 + x[0] + ((5.0 - x[1]) * x[1] - 2.0) * x[1],
                -29.0 + x[0] + ((x[1] + 1.0) * x[1] - 14.0) * x[1],
            ]),
            MappingKind::Beale => {
                let y = [1.5, 2.25, 2.625];
                DVector::from_fn(3, |i, _| {
                    y[i] - x[0] * (1.0 - x[1].powi(i as i32 + 1))
                })
            }
            MappingKind::HelicalValley => {
                let theta = helical_theta(x[0], x[1]);
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                DVector::from_column_slice(&[
                    10.0 * (x[2] - 10.0 * theta),
                    10.0 * (r - 1.0),
                    x[2],
                ])
            }
            MappingKind::Bard => DVector::from_fn(15, |i, _| {
                let u = (i + 1) as f64;
                let v = (15 - i) as f64;
                let w = u.min(v);
                BARD_Y[i] - (x[0] + u / (v * x[1] + w * x[2]))
            }),
            MappingKind::Gaussian => DVector::from_fn(15, |i, _| {
                let t = (8.0 - (i + 1) as f64) / 2.0;
                x[0] * (-x[1] * (t - x[2]).powi(2) / 2.0).exp() - GAUSSIAN_Y[i]
            }),
            MappingKind::Box3d => DVector::from_fn(10, |i, _| {
                let t = 0.1 * (i + 1) as f64;
                (-t * x[0]).exp() - (-t * x[1]).exp() - x[2] * ((-t).exp() - (-10.0 * t).exp())
            }),
            MappingKind::PowellSingular => DVector::from_column_slice(&[
                x[0] + 10.0 * x[1],
                5.0f64.sqrt() * (x[2] - x[3]),
                (x[1] - 2.0 * x[2]).powi(2),
                10.0f64.sqrt() * (x[0] - x[3]).powi(2),
            ]),
            MappingKind::Wood => DVector::from_column_slice(&[
                10.0 * (x[1] - x[0] * x[0]),
                1.0 - x[0],
                90.0f64.sqrt() * (x[3] - x[2] * x[2]),
                1.0 - x[2],
                10.0f64.sqrt() * (x[1] + x[3] - 2.0),
                (x[1] - x[3]) / 10.0f64.sqrt(),
            ]),
            MappingKind::Trigonometric { n } => {
                let nf = *n as f64;
                let cos_sum: f64 = x.iter().map(|v| v.cos()).sum();
                DVector::from_fn(*n, |i, _| {
                    nf - cos_sum + (i + 1) as f64 * (1.0 - x[i].cos()) - x[i].sin()
                })
            }
            MappingKind::ExtendedRosenbrock { n } => DVector::from_fn(*n, |i, _| {
                if i % 2 == 0 {
                    10.0 * (x[i + 1] - x[i] * x[i])
                } else {
                    1.0 - x[i - 1]
                }
            }),
            MappingKind::BrownAlmostLinear { n } => {
                let sum: f64 = x.iter().sum();
                let prod: f64 = x.iter().product();
                DVector::from_fn(*n, |i, _| {
                    if i + 1 < *n {
                        x[i] + sum - (*n as f64 + 1.0)
                    } else {
                        prod - 1.0
                    }
                })
            }
            MappingKind::LinearFullRank { n, p } => {
                let sum: f64 = x.iter().sum();
                let scale = 2.0 / *p as f64;
                DVector::from_fn(*p, |i, _| {
                    if i < *n {
                        x[i] - scale * sum - 1.0
                    } else {
                        -scale * sum - 1.0
                    }
                })
            }
        }
        .rows(0, p)
        .into_owned()
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (n, p) = self.dims();
        match self {
            MappingKind::Rosenbrock => {
                DMatrix::from_row_slice(2, 2, &[-20.0 * x[0], 10.0, -1.0, 0.0])
            }
            MappingKind::FreudensteinRoth => DMatrix::from_row_slice(
                2,
                2,
                &[
                    1.0,
                    10.0 * x[1] - 3.0 * x[1] * x[1] - 2.0,
                    1.0,
                    3.0 * x[1] * x[1] + 2.0 * x[1] - 14.0,
                ],
            ),
            MappingKind::Beale => DMatrix::from_fn(3, 2, |i, j| {
                let k = i as i32 + 1;
                if j == 0 {
                    -(1.0 - x[1].powi(k))
                } else {
                    k as f64 * x[0] * x[1].powi(k - 1)
                }
            }),
            MappingKind::HelicalValley => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                let r = r2.sqrt();
                let tau = std::f64::consts::TAU;
                DMatrix::from_row_slice(
                    3,
                    3,
                    &[
                        100.0 * x[1] / (tau * r2),
                        -100.0 * x[0] / (tau * r2),
                        10.0,
                        10.0 * x[0] / r,
                        10.0 * x[1] / r,
                        0.0,
                        0.0,
                        0.0,
                        1.0,
                    ],
                )
            }
            MappingKind::Bard => DMatrix::from_fn(15, 3, |i, j| {
                let u = (i + 1) as f64;
                let v = (15 - i) as f64;
                let w = u.min(v);
                let den = v * x[1] + w * x[2];
                match j {
                    0 => -1.0,
                    1 => u * v / (den * den),
                    _ => u * w / (den * den),
                }
            }),
            MappingKind::Gaussian => DMatrix::from_fn(15, 3, |i, j| {
                let t = (8.0 - (i + 1) as f64) / 2.0;
                let dt = t - x[2];
                let e = (-x[1] * dt * dt / 2.0).exp();
                match j {
                    0 => e,
                    1 => -x[0] * dt * dt / 2.0 * e,
                    _ => x[0] * x[1] * dt * e,
                }
            }),
            MappingKind::Box3d => DMatrix::from_fn(10, 3, |i, j| {
                let t = 0.1 * (i + 1) as f64;
                match j {
                    0 => -t * (-t * x[0]).exp(),
                    1 => t * (-t * x[1]).exp(),
                    _ => -((-t).exp() - (-10.0 * t).exp()),
                }
            }),
            MappingKind::PowellSingular => {
                let s5 = 5.0f64.sqrt();
                let s10 = 10.0f64.sqrt();
                DMatrix::from_row_slice(
                    4,
                    4,
                    &[
                        1.0,
                        10.0,
                        0.0,
                        0.0,
                        0.0,
                        0.0,
                        s5,
                        -s5,
                        0.0,
                        2.0 * (x[1] - 2.0 * x[2]),
                        -4.0 * (x[1] - 2.0 * x[2]),
                        0.0,
                        2.0 * s10 * (x[0] - x[3]),
                        0.0,
                        0.0,
                        -2.0 * s10 * (x[0] - x[3]),
                    ],
                )
            }
            MappingKind::Wood => {
                let s90 = 90.0f64.sqrt();
                let s10 = 10.0f64.sqrt();
                DMatrix::from_row_slice(
                    6,
                    4,
                    &[
                        -20.0 * x[0],
                        10.0,
                        0.0,
                        0.0,
                        -1.0,
                        0.0,
                        0.0,
                        0.0,
                        0.0,
                        0.0,
                        -2.0 * s90 * x[2],
                        s90,
                        0.0,
                        0.0,
                        -1.0,
                        0.0,
                        0.0,
                        s10,
                        0.0,
                        s10,
                        0.0,
                        1.0 / s10,
                        0.0,
                        -1.0 / s10,
                    ],
                )
            }
            MappingKind::Trigonometric { n } => DMatrix::from_fn(*n, *n, |i, j| {
                if i == j {
                    x[i].sin() + (i + 1) as f64 * x[i].sin() - x[i].cos()
                } else {
                    x[j].sin()
                }
            }),
            MappingKind::ExtendedRosenbrock { n } => DMatrix::from_fn(*n, *n, |i, j| {
                if i % 2 == 0 {
                    if j == i {
                        -20.0 * x[i]
                    } else if j == i + 1 {
                        10.0
                    } else {
                        0.0
                    }
                } else if j == i - 1 {
                    -1.0
                } else {
                    0.0
                }
            }),
            MappingKind::BrownAlmostLinear { n } => DMatrix::from_fn(*n, *n, |i, j| {
                if i + 1 < *n {
                    if i == j {
                        2.0
                    } else {
                        1.0
                    }
                } else {
                    x.iter()
                        .enumerate()
                        .filter(|(k, _)| *k != j)
                        .map(|(_, v)| v)
                        .product()
                }
            }),
            MappingKind::LinearFullRank { n, p } => {
                let scale = 2.0 / *p as f64;
                DMatrix::from_fn(*p, *n, |i, j| {
                    let base = if i < *n && i == j { 1.0 } else { 0.0 };
                    base - scale
                })
            }
        }
        .rows(0, p)
        .into_owned()
        .columns(0, n)
        .into_owned()
    }
}

/// A suite problem: mapping, start point, and (possibly infinite) bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub name: String,
    pub kind: MappingKind,
    pub x0: DVector<f64>,
    #[serde(with = "bound_vector")]
    pub lower: DVector<f64>,
    #[serde(with = "bound_vector")]
    pub upper: DVector<f64>,
}

/// JSON cannot carry non-finite floats, so bound vectors encode infinities
/// as the strings `"inf"` and `"-inf"`.
mod bound_vector {
    use nalgebra::DVector;
    use serde::de::Error as _;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for &x in v.iter() {
            if x == f64::INFINITY {
                seq.serialize_element("inf")?;
            } else if x == f64::NEG_INFINITY {
                seq.serialize_element("-inf")?;
            } else {
                seq.serialize_element(&x)?;
            }
        }
        seq.end()
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Num(f64),
        Word(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        let raw: Vec<Entry> = Vec::deserialize(d)?;
        let mut out = Vec::with_capacity(raw.len());
        for e in raw {
            out.push(match e {
                Entry::Num(x) => x,
                Entry::Word(w) => match w.as_str() {
                    "inf" => f64::INFINITY,
                    "-inf" => f64::NEG_INFINITY,
                    other => {
                        return Err(D::Error::custom(format!("bad bound entry {other:?}")))
                    }
                },
            });
        }
        Ok(DVector::from_vec(out))
    }
}

impl ProblemInstance {
    pub fn unconstrained(name: &str, kind: MappingKind) -> Self {
        let (n, _) = kind.dims();
        let x0 = kind.standard_start();
        ProblemInstance {
            name: name.to_string(),
            kind,
            x0,
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn n(&self) -> usize {
        self.kind.dims().0
    }

    pub fn p(&self) -> usize {
        self.kind.dims().1
    }
}

impl VectorMapping for ProblemInstance {
    fn input_dim(&self) -> usize {
        self.n()
    }
    fn output_dim(&self) -> usize {
        self.p()
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        self.kind.eval(x)
    }
}

impl BenchmarkJacobian for ProblemInstance {
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.kind.jacobian(x)
    }
}

/// The benchmark suite, in a fixed deterministic order. All members have
/// `2 <= n <= 12` and `2 <= p <= 65`.
pub fn suite() -> Vec<ProblemInstance> {
    vec![
        ProblemInstance::unconstrained("rosenbrock", MappingKind::Rosenbrock),
        ProblemInstance::unconstrained("freudenstein_roth", MappingKind::FreudensteinRoth),
        ProblemInstance::unconstrained("beale", MappingKind::Beale),
        ProblemInstance::unconstrained("helical_valley", MappingKind::HelicalValley),
        ProblemInstance::unconstrained("bard", MappingKind::Bard),
        ProblemInstance::unconstrained("gaussian", MappingKind::Gaussian),
        ProblemInstance::unconstrained("box_3d", MappingKind::Box3d),
        ProblemInstance::unconstrained("powell_singular", MappingKind::PowellSingular),
        ProblemInstance::unconstrained("wood", MappingKind::Wood),
        ProblemInstance::unconstrained("trigonometric", MappingKind::Trigonometric { n: 5 }),
        ProblemInstance::unconstrained(
            "extended_rosenbrock",
            MappingKind::ExtendedRosenbrock { n: 6 },
        ),
        ProblemInstance::unconstrained(
            "brown_almost_linear",
            MappingKind::BrownAlmostLinear { n: 5 },
        ),
        ProblemInstance::unconstrained(
            "linear_full_rank",
            MappingKind::LinearFullRank { n: 12, p: 65 },
        ),
    ]
}

/// Box bounds centered at `x0` with the midpoint of `[x0, x_tilde]` on the
/// boundary in at least one coordinate. Returns `(lower, upper, degenerate)`
/// where `degenerate` flags the zero-width box obtained when `x0 == x_tilde`.
pub fn make_bounds(
    x0: &DVector<f64>,
    x_tilde: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>, bool)> {
    if x0.len() != x_tilde.len() {
        return Err(Error::invalid("make_bounds: dimension mismatch"));
    }
    let mid = (x0 + x_tilde) * 0.5;
    let half = DVector::from_fn(x0.len(), |i, _| (x0[i] - mid[i]).abs());
    let lower = x0 - &half;
    let upper = x0 + &half;
    let degenerate = half.iter().all(|v| *v == 0.0);
    Ok((lower, upper, degenerate))
}

/// Which of the four benchmark outer mappings an instance uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HKind {
    H1,
    H2,
    H3,
    H4,
}

impl HKind {
    pub const ALL: [HKind; 4] = [HKind::H1, HKind::H2, HKind::H3, HKind::H4];

    pub fn label(&self) -> &'static str {
        match self {
            HKind::H1 => "h1",
            HKind::H2 => "h2",
            HKind::H3 => "h3",
            HKind::H4 => "h4",
        }
    }
}

/// Number of quadratic pieces used for generated h4 instances.
pub const H4_PIECES: usize = 4;

/// One benchmark problem instance, fully reconstructible from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkInstance {
    pub id: String,
    pub problem: ProblemInstance,
    pub h_kind: HKind,
    pub h_spec: SelectionSpec,
    pub constrained: bool,
    pub seed: u64,
}

fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for part in parts {
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// Deterministic per-instance seed derived from the base seed, problem name,
/// and outer-mapping kind.
pub fn instance_seed(name: &str, h_kind: HKind, seed: u64) -> u64 {
    fnv1a(&[name.as_bytes(), h_kind.label().as_bytes(), &seed.to_le_bytes()])
}

/// Best-by-f points recorded from unconstrained runs, keyed by instance id.
pub type BestPoints = BTreeMap<String, Vec<f64>>;

/// The cross product `problems x {h1..h4}` for one setting. Constrained
/// instances require the unconstrained approximate minimizers `x_tilde`.
pub fn build_benchmark(
    problems: &[ProblemInstance],
    constrained: bool,
    seed: u64,
    best_points: Option<&BestPoints>,
) -> Result<Vec<BenchmarkInstance>> {
    let mut out = Vec::with_capacity(problems.len() * 4);
    for prob in problems {
        let fx0 = prob.eval(&prob.x0);
        let fx0_slice: Vec<f64> = fx0.iter().cloned().collect();
        for h_kind in HKind::ALL {
            let iseed = instance_seed(&prob.name, h_kind, seed);
            let h_spec = match h_kind {
                HKind::H1 => SelectionSpec::H1 { p: prob.p() },
                HKind::H2 => SelectionSpec::H2 { p: prob.p() },
                HKind::H3 => {
                    SelectionSpec::H3(CensoredL1Instance::generate_anchored(&fx0_slice, iseed)?)
                }
                HKind::H4 => SelectionSpec::H4(PiecewiseQuadraticInstance::generate_anchored(
                    &fx0_slice, H4_PIECES, iseed,
                )?),
            };
            let id = format!("{}+{}", prob.name, h_kind.label());
            let mut problem = prob.clone();
            if constrained {
                let best = best_points
                    .and_then(|bp| bp.get(&id))
                    .ok_or_else(|| {
                        Error::MissingPrerequisite(format!(
                            "constrained benchmark needs an unconstrained best point for {id}"
                        ))
                    })?;
                let x_tilde = DVector::from_column_slice(best);
                let (lower, upper, _) = make_bounds(&prob.x0, &x_tilde)?;
                problem.lower = lower;
                problem.upper = upper;
            }
            out.push(BenchmarkInstance {
                id,
                problem,
                h_kind,
                h_spec,
                constrained,
                seed,
            });
        }
    }
    Ok(out)
}
