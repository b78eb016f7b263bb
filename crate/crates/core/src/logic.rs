//! Boolean switching logic over predicates `g(X, t) < 0`.
//!
//! A segment-activation condition is an arbitrary AND/OR/NOT combination of
//! predicates. It is normalized to disjunctive normal form (an OR of
//! minterms, each minterm an AND of signed predicates; NOT is absorbed by
//! flipping the predicate sign) and then evaluated either discretely
//! (exact 0/1) or smoothly: each signed predicate becomes a sigmoid, each
//! minterm the product of its sigmoids, and the OR becomes the hyperbolic
//! tangent of the minterm sum. A one-minterm condition skips the tanh
//! wrapper so the product form is reproduced exactly.

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LogicError {
    #[error("empty boolean expression cannot be normalized")]
    EmptyExpression,
    #[error("predicate {0} evaluated to a non-finite value")]
    NonFiniteValue(usize),
    #[error("segment value vectors have mismatched dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("smoothing slope must be positive, got {0}")]
    NonPositiveSlope(f64),
}

/// Index into a predicate table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PredicateId(pub usize);

/// A condition `g(X, t) < 0` bound to a scalar function of state and time.
pub struct Predicate {
    pub label: String,
    pub g: Box<dyn Fn(&[f64], f64) -> f64 + Send + Sync>,
}

impl Predicate {
    pub fn new(
        label: impl Into<String>,
        g: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Predicate { label: label.into(), g: Box::new(g) }
    }
}

/// Table of predicates referenced by [`PredicateId`].
#[derive(Default)]
pub struct PredicateSet {
    preds: Vec<Predicate>,
}

impl PredicateSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, pred: Predicate) -> PredicateId {
        self.preds.push(pred);
        PredicateId(self.preds.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.preds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }

    pub fn label(&self, id: PredicateId) -> &str {
        &self.preds[id.0].label
    }

    /// Evaluate predicate `id` at `(x, t)`.
    pub fn eval(&self, id: PredicateId, x: &[f64], t: f64) -> f64 {
        (self.preds[id.0].g)(x, t)
    }
}

/// Arbitrary boolean combination with predicate leaves.
#[derive(Debug, Clone, PartialEq)]
pub enum BoolExpr {
    Pred(PredicateId),
    Not(Box<BoolExpr>),
    And(Vec<BoolExpr>),
    Or(Vec<BoolExpr>),
}

impl BoolExpr {
    pub fn pred(id: PredicateId) -> Self {
        BoolExpr::Pred(id)
    }

    pub fn not(e: BoolExpr) -> Self {
        BoolExpr::Not(Box::new(e))
    }

    pub fn and(es: Vec<BoolExpr>) -> Self {
        BoolExpr::And(es)
    }

    pub fn or(es: Vec<BoolExpr>) -> Self {
        BoolExpr::Or(es)
    }

    /// Truth value under an assignment of predicate truth values.
    pub fn eval(&self, truth: &impl Fn(PredicateId) -> bool) -> bool {
        match self {
            BoolExpr::Pred(id) => truth(*id),
            BoolExpr::Not(e) => !e.eval(truth),
            BoolExpr::And(es) => es.iter().all(|e| e.eval(truth)),
            BoolExpr::Or(es) => es.iter().any(|e| e.eval(truth)),
        }
    }
}

/// One signed predicate occurrence inside a minterm. `negated` means the
/// effective condition is `-g < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Literal {
    pub pred: PredicateId,
    pub negated: bool,
}

impl Literal {
    #[inline]
    pub fn signed<T: Scalar>(&self, g: T) -> T {
        if self.negated {
            -g
        } else {
            g
        }
    }
}

/// Disjunctive normal form: OR over minterms, each an AND of literals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnfExpr {
    minterms: Vec<Vec<Literal>>,
}

/// Sigmoid and tanh slopes used by the smoothed evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub s: f64,
    pub zeta: f64,
}

impl SmoothingParams {
    pub fn new(s: f64, zeta: f64) -> Result<Self, LogicError> {
        if !(s > 0.0) {
            return Err(LogicError::NonPositiveSlope(s));
        }
        if !(zeta > 0.0) {
            return Err(LogicError::NonPositiveSlope(zeta));
        }
        Ok(SmoothingParams { s, zeta })
    }
}

/// Smoothed step `1 - u(g)`: `1 / (1 + exp(s * g))`.
///
/// Evaluated through `exp(-|s*g|)` so slopes up to the final continuation
/// values (4e4) cannot overflow; the result saturates to exactly 0 or 1.
#[inline]
pub fn sigmoid<T: Scalar>(g: T, s: f64) -> T {
    let x = g * T::c(s);
    if x.value() > 0.0 {
        let e = (-x).exp();
        e / (T::one() + e)
    } else {
        T::one() / (T::one() + x.exp())
    }
}

/// Smoothed signum for nonnegative input: `tanh(zeta * z)`. Exactly zero at
/// `z = 0`, which is why the OR saturation uses signum rather than a step.
#[inline]
pub fn tanh_sat<T: Scalar>(z: T, zeta: f64) -> T {
    (z * T::c(zeta)).tanh()
}

impl DnfExpr {
    pub fn new(minterms: Vec<Vec<Literal>>) -> Result<Self, LogicError> {
        if minterms.is_empty() || minterms.iter().any(|m| m.is_empty()) {
            return Err(LogicError::EmptyExpression);
        }
        Ok(DnfExpr { minterms })
    }

    pub fn minterms(&self) -> &[Vec<Literal>] {
        &self.minterms
    }

    pub fn num_minterms(&self) -> usize {
        self.minterms.len()
    }

    /// Exact discrete switching value: 1 iff some minterm has every signed
    /// predicate strictly negative. `g = 0` counts as not satisfied.
    pub fn eval_discrete_with(
        &self,
        g_of: impl Fn(PredicateId) -> f64,
    ) -> Result<f64, LogicError> {
        let mut active = false;
        for m in &self.minterms {
            let mut all = true;
            for lit in m {
                let g = lit.signed(g_of(lit.pred));
                if !g.is_finite() {
                    return Err(LogicError::NonFiniteValue(lit.pred.0));
                }
                if g >= 0.0 {
                    all = false;
                }
            }
            active = active || all;
        }
        Ok(if active { 1.0 } else { 0.0 })
    }

    /// Smoothed switching weight. Minterms are products of sigmoids; with
    /// two or more minterms the sum is saturated through tanh, with exactly
    /// one the bare product is returned (the product form is already in
    /// `[0, 1)` and wrapping it would distort the weight).
    pub fn eval_smooth_with<T: Scalar>(
        &self,
        g_of: impl Fn(PredicateId) -> T,
        p: &SmoothingParams,
    ) -> Result<T, LogicError> {
        let mut sum = T::zero();
        for m in &self.minterms {
            let mut prod = T::one();
            for lit in m {
                let g = lit.signed(g_of(lit.pred));
                if !g.value().is_finite() {
                    return Err(LogicError::NonFiniteValue(lit.pred.0));
                }
                prod = prod * sigmoid(g, p.s);
            }
            sum += prod;
        }
        if self.minterms.len() == 1 {
            Ok(sum)
        } else {
            Ok(tanh_sat(sum, p.zeta))
        }
    }

    /// Discrete evaluation against a predicate table at `(x, t)`.
    pub fn eval_discrete(
        &self,
        set: &PredicateSet,
        x: &[f64],
        t: f64,
    ) -> Result<f64, LogicError> {
        self.eval_discrete_with(|id| set.eval(id, x, t))
    }

    /// Smoothed evaluation against a predicate table at `(x, t)`.
    pub fn eval_smooth(
        &self,
        set: &PredicateSet,
        x: &[f64],
        t: f64,
        p: &SmoothingParams,
    ) -> Result<f64, LogicError> {
        self.eval_smooth_with(|id| set.eval(id, x, t), p)
    }
}

/// Convert an arbitrary boolean expression to DNF.
///
/// NOT nodes are pushed to the leaves (De Morgan) and absorbed into the
/// literal sign; AND distributes over OR exhaustively, left-major, so
/// `(A OR B) AND C` yields minterms `[A, C], [B, C]`. No minimization is
/// performed: the minterm structure as written feeds the smoothed sum, so
/// simplifying it would change the smoothed weights.
pub fn build_dnf(expr: &BoolExpr) -> Result<DnfExpr, LogicError> {
    let minterms = dnf_minterms(expr, false)?;
    DnfExpr::new(minterms)
}

fn dnf_minterms(expr: &BoolExpr, negate: bool) -> Result<Vec<Vec<Literal>>, LogicError> {
    match expr {
        BoolExpr::Pred(id) => Ok(vec![vec![Literal { pred: *id, negated: negate }]]),
        BoolExpr::Not(inner) => dnf_minterms(inner, !negate),
        BoolExpr::And(es) if !negate => distribute(es, false),
        BoolExpr::Or(es) if negate => distribute(es, true),
        BoolExpr::Or(es) => concat(es, false),
        BoolExpr::And(es) => concat(es, true),
    }
}

/// OR of sub-DNFs: concatenate minterm lists in order.
fn concat(es: &[BoolExpr], negate: bool) -> Result<Vec<Vec<Literal>>, LogicError> {
    if es.is_empty() {
        return Err(LogicError::EmptyExpression);
    }
    let mut out = Vec::new();
    for e in es {
        out.extend(dnf_minterms(e, negate)?);
    }
    Ok(out)
}

/// AND of sub-DNFs: cross product of minterm lists, left-major.
fn distribute(es: &[BoolExpr], negate: bool) -> Result<Vec<Vec<Literal>>, LogicError> {
    if es.is_empty() {
        return Err(LogicError::EmptyExpression);
    }
    let mut acc: Vec<Vec<Literal>> = vec![vec![]];
    for e in es {
        let sub = dnf_minterms(e, negate)?;
        let mut next = Vec::with_capacity(acc.len() * sub.len());
        for a in &acc {
            for s in &sub {
                let mut m = a.clone();
                m.extend_from_slice(s);
                next.push(m);
            }
        }
        acc = next;
    }
    Ok(acc)
}

/// Weighted combination of per-segment value vectors using the smoothed
/// switching weight of each segment's condition.
pub fn blend(
    segments: &[(DnfExpr, Vec<f64>)],
    set: &PredicateSet,
    x: &[f64],
    t: f64,
    p: &SmoothingParams,
) -> Result<Vec<f64>, LogicError> {
    let dim = segments.first().map(|(_, v)| v.len()).unwrap_or(0);
    let mut out = vec![0.0; dim];
    for (dnf, values) in segments {
        if values.len() != dim {
            return Err(LogicError::DimensionMismatch(dim, values.len()));
        }
        let w = dnf.eval_smooth(set, x, t, p)?;
        for (o, v) in out.iter_mut().zip(values) {
            *o += w * v;
        }
    }
    Ok(out)
}
