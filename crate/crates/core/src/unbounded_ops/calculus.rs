//! Bounded transform, continuous functional calculus, resolvents and the
//! off-diagonal doubling `T̂`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64, I};

use super::{FiberOp, OperatorKind, OperatorRep};

type RealFn = Arc<dyn Fn(f64) -> C64 + Send + Sync>;

/// A continuous function on ℝ with limits at ±∞.
#[derive(Clone)]
pub struct FunctionSymbol {
    f: RealFn,
    pub limit_neg: Option<C64>,
    pub limit_pos: Option<C64>,
}

impl fmt::Debug for FunctionSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionSymbol")
            .field("limit_neg", &self.limit_neg)
            .field("limit_pos", &self.limit_pos)
            .finish()
    }
}

impl FunctionSymbol {
    pub fn new(f: impl Fn(f64) -> C64 + Send + Sync + 'static, limit_neg: Option<C64>, limit_pos: Option<C64>) -> Self {
        Self {
            f: Arc::new(f),
            limit_neg,
            limit_pos,
        }
    }

    pub fn constant(v: C64) -> Self {
        Self::new(move |_| v, Some(v), Some(v))
    }

    /// `(1 + x²/n²)^{-1}`.
    pub fn damping(n: f64) -> Self {
        let zero = Some(C64::from(0.0));
        Self::new(move |x| C64::from(1.0 / (1.0 + x * x / (n * n))), zero, zero)
    }

    pub fn eval(&self, x: f64) -> C64 {
        (self.f)(x)
    }

    /// `f̃(x) = f(x / √(1 - x²))` on `[-1, 1]`, using the limits at `±1`.
    pub fn compressed(&self, x: f64) -> Result<C64> {
        if x <= -1.0 {
            self.limit_neg.ok_or_else(|| Error::input("function has no declared limit at -∞"))
        } else if x >= 1.0 {
            self.limit_pos.ok_or_else(|| Error::input("function has no declared limit at +∞"))
        } else {
            Ok(self.eval(x / (1.0 - x * x).sqrt()))
        }
    }

    pub fn product(&self, other: &FunctionSymbol) -> FunctionSymbol {
        let (f, g) = (self.f.clone(), other.f.clone());
        FunctionSymbol {
            f: Arc::new(move |x| f(x) * g(x)),
            limit_neg: self.limit_neg.zip(other.limit_neg).map(|(a, b)| a * b),
            limit_pos: self.limit_pos.zip(other.limit_pos).map(|(a, b)| a * b),
        }
    }
}

/// Hermitian matrix of a selfadjoint fiber.
pub fn hermitian_form(f: &FiberOp) -> Result<CMat> {
    let m = f.to_relation().operator_form()?;
    let residual = linalg::hermitian_residual(&m);
    if residual > 1e-8 {
        return Err(Error::NotSymmetric { residual });
    }
    Ok((&m + m.adjoint()) * C64::from(0.5))
}

fn per_node<T>(t: &OperatorRep, f: impl Fn(&FiberOp) -> Result<T>) -> Result<Vec<T>> {
    (0..t.space.len()).map(|p| f(&t.fiber_at(p)?)).collect()
}

/// `T (I + T²)^{-1/2}` at every node.
pub fn bounded_transform(t: &OperatorRep) -> Result<Vec<CMat>> {
    per_node(t, |f| {
        let m = hermitian_form(f)?;
        Ok(linalg::hermitian_apply(&m, |x| C64::from(x / (1.0 + x * x).sqrt())))
    })
}

/// `f(T) = f̃(T (I + T²)^{-1/2})` at every node.
pub fn functional_calculus(t: &OperatorRep, f: &FunctionSymbol) -> Result<Vec<CMat>> {
    f.compressed(-1.0)?;
    f.compressed(1.0)?;
    let transforms = bounded_transform(t)?;
    transforms
        .iter()
        .map(|b| {
            let (vals, u) = linalg::hermitian_eigen(b);
            let mut scaled = u.clone();
            for (j, mut col) in scaled.column_iter_mut().enumerate() {
                col *= f.compressed(vals[j])?;
            }
            Ok(scaled * u.adjoint())
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ResolventResult {
    /// `(T - iμ)^{-1}`, absent when the shifted relation is not invertible.
    pub matrix: Option<CMat>,
    /// Smallest graph-normalized singular value of `T - iμ`.
    pub sigma_min: f64,
    pub singular: bool,
}

pub fn fiber_resolvent(f: &FiberOp, mu: f64) -> Result<ResolventResult> {
    if mu == 0.0 || !mu.is_finite() {
        return Err(Error::input("resolvent needs a nonzero finite μ"));
    }
    let r = f.to_relation();
    let n = r.hilbert_dim();
    let q = r.normalized();
    let shifted = &q.action - &q.embed * (I * mu);
    let s = linalg::singular_values(&shifted);
    let sigma_min = if q.param_dim() == n { s.last().copied().unwrap_or(0.0) } else { 0.0 };
    if q.param_dim() != n || sigma_min <= 1e-10 * s.first().copied().unwrap_or(1.0) {
        return Ok(ResolventResult {
            matrix: None,
            sigma_min,
            singular: true,
        });
    }
    let inv = linalg::inverse(&shifted).ok_or_else(|| Error::Singular("T - iμ".into()))?;
    Ok(ResolventResult {
        matrix: Some(&q.embed * inv),
        sigma_min,
        singular: false,
    })
}

/// `(T - iμ)^{-1}` at every node.
pub fn resolvent(t: &OperatorRep, mu: f64) -> Result<Vec<ResolventResult>> {
    per_node(t, |f| fiber_resolvent(f, mu))
}

pub fn build_hat(t: &OperatorRep) -> OperatorRep {
    OperatorRep {
        space: t.space.clone(),
        kind: OperatorKind::Hat(Box::new(t.clone())),
    }
}
