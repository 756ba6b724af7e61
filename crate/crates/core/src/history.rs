//! Evaluation history: the budgeted gateway through which solvers call `F`,
//! plus spatial queries over past evaluations.
//!
//! Every `F` evaluation flows through [`History::evaluate`], which caches
//! duplicates, enforces the budget, and records the composite value and the
//! essentially active selection indices alongside the raw output.

use std::io::{BufRead, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::VectorMapping;
use crate::selections::Selection;

/// Points closer than this in the max norm are treated as duplicates and
/// served from the cache without spending budget.
pub const DUPLICATE_TOL: f64 = 1e-14;

/// One completed evaluation of `F`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub x: DVector<f64>,
    pub fx: DVector<f64>,
    /// `h(F(x))`.
    pub f: f64,
    /// Essentially active selection indices at `F(x)`.
    pub active: Vec<usize>,
    /// Position in evaluation order, starting at 0.
    pub eval_index: usize,
}

/// Append-only store of evaluations with a hard budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EvaluationRecord>,
    pub n: usize,
    pub p: usize,
    pub eval_budget: usize,
    pub evals_used: usize,
    pub activity_tol: f64,
}

impl History {
    pub fn new(n: usize, p: usize, eval_budget: usize, activity_tol: f64) -> Self {
        History {
            records: Vec::new(),
            n,
            p,
            eval_budget,
            evals_used: 0,
            activity_tol,
        }
    }

    pub fn budget_left(&self) -> usize {
        self.eval_budget.saturating_sub(self.evals_used)
    }

    /// Index of the record whose point duplicates `x`, if any.
    pub fn find(&self, x: &DVector<f64>) -> Option<usize> {
        self.records
            .iter()
            .position(|r| max_norm_dist(&r.x, x) <= DUPLICATE_TOL)
    }

    /// Evaluate `F` at `x` (or serve a cached duplicate) and return the
    /// record index. Duplicates cost no budget; fresh evaluations past the
    /// budget return [`Error::BudgetExhausted`] without calling `F`.
    pub fn evaluate(
        &mut self,
        mapping: &dyn VectorMapping,
        h: &dyn Selection,
        x: &DVector<f64>,
    ) -> Result<usize> {
        if x.len() != self.n {
            return Err(Error::invalid(format!(
                "evaluate: point has dimension {}, expected {}",
                x.len(),
                self.n
            )));
        }
        if let Some(idx) = self.find(x) {
            return Ok(idx);
        }
        if self.evals_used >= self.eval_budget {
            return Err(Error::BudgetExhausted);
        }
        let fx = mapping.eval(x);
        if fx.len() != self.p || fx.iter().any(|v| !v.is_finite()) {
            return Err(Error::EvaluationFailure {
                point: x.iter().cloned().collect(),
            });
        }
        let f = h.value(&fx);
        if !f.is_finite() {
            return Err(Error::EvaluationFailure {
                point: x.iter().cloned().collect(),
            });
        }
        let active = h.active_indices(&fx, self.activity_tol);
        let idx = self.records.len();
        self.records.push(EvaluationRecord {
            x: x.clone(),
            fx,
            f,
            active,
            eval_index: self.evals_used,
        });
        self.evals_used += 1;
        Ok(idx)
    }

    /// Record indices within Euclidean distance `radius` of `center`,
    /// ordered closest first.
    pub fn points_within(&self, center: &DVector<f64>, radius: f64) -> Vec<usize> {
        let mut hits: Vec<(usize, f64)> = self
            .records
            .iter()
            .enumerate()
            .filter_map(|(i, r)| {
                let d = (&r.x - center).norm();
                (d <= radius).then_some((i, d))
            })
            .collect();
        hits.sort_by(|a, b| a.1.total_cmp(&b.1));
        hits.into_iter().map(|(i, _)| i).collect()
    }

    /// Record index with the lowest composite value, ties broken by
    /// evaluation order.
    pub fn best(&self) -> Option<usize> {
        self.records
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.f.total_cmp(&b.1.f).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
    }

    /// One JSON record per line.
    pub fn dump_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }

    /// Rebuild a history from [`dump_jsonl`](Self::dump_jsonl) output. The
    /// restored budget equals the number of records.
    pub fn restore_jsonl<R: BufRead>(r: R, activity_tol: f64) -> Result<Self> {
        let mut records: Vec<EvaluationRecord> = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        let (n, p) = records
            .first()
            .map(|r| (r.x.len(), r.fx.len()))
            .ok_or_else(|| Error::invalid("restore_jsonl: empty history"))?;
        let used = records.len();
        Ok(History {
            records,
            n,
            p,
            eval_budget: used,
            evals_used: used,
            activity_tol,
        })
    }
}

pub(crate) fn max_norm_dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
