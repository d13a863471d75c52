//! The standard module E = C(X, H) with its C(X)-valued inner product.

use serde::{Deserialize, Serialize};

use crate::cstar_space::{AlgebraElement, BaseSpace};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64};
use crate::unbounded_ops::{DomainVector, OperatorRep};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVector")]
pub struct ModuleVector {
    pub space: BaseSpace,
    pub fiber_dim: usize,
    pub values: Vec<Vec<C64>>,
}

#[derive(Deserialize)]
struct RawVector {
    space: BaseSpace,
    fiber_dim: usize,
    values: Vec<Vec<C64>>,
}

impl TryFrom<RawVector> for ModuleVector {
    type Error = Error;
    fn try_from(r: RawVector) -> Result<Self> {
        ModuleVector::new(r.space, r.fiber_dim, r.values)
    }
}

impl ModuleVector {
    pub fn new(space: BaseSpace, fiber_dim: usize, values: Vec<Vec<C64>>) -> Result<Self> {
        space.validate()?;
        if fiber_dim == 0 {
            return Err(Error::input("fiber dimension must be positive"));
        }
        if values.len() != space.len() {
            return Err(Error::DimensionMismatch {
                expected: space.len(),
                found: values.len(),
            });
        }
        for v in &values {
            if v.len() != fiber_dim {
                return Err(Error::DimensionMismatch {
                    expected: fiber_dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::input("module vector has non-finite entries"));
            }
        }
        Ok(Self {
            space,
            fiber_dim,
            values,
        })
    }

    pub fn from_fibers(space: &BaseSpace, fibers: Vec<CVec>) -> Result<Self> {
        let d = fibers.first().map(|f| f.len()).unwrap_or(0);
        Self::new(
            space.clone(),
            d,
            fibers.into_iter().map(|f| f.iter().copied().collect()).collect(),
        )
    }

    pub fn from_fn(space: &BaseSpace, fiber_dim: usize, f: impl Fn(f64) -> Vec<C64>) -> Result<Self> {
        Self::new(
            space.clone(),
            fiber_dim,
            (0..space.len()).map(|p| f(space.coord(p))).collect(),
        )
    }

    pub fn zero(space: &BaseSpace, fiber_dim: usize) -> Self {
        Self {
            space: space.clone(),
            fiber_dim,
            values: vec![vec![C64::from(0.0); fiber_dim]; space.len()],
        }
    }

    /// The constant section equal to the k-th unit vector.
    pub fn unit(space: &BaseSpace, fiber_dim: usize, k: usize) -> Self {
        let mut v = Self::zero(space, fiber_dim);
        for f in &mut v.values {
            f[k] = C64::from(1.0);
        }
        v
    }

    /// Scalar function times a fixed fiber vector.
    pub fn scalar_times(a: &AlgebraElement, e: &CVec) -> Self {
        Self {
            space: a.space.clone(),
            fiber_dim: e.len(),
            values: a
                .values
                .iter()
                .map(|s| e.iter().map(|z| z * s).collect())
                .collect(),
        }
    }

    pub fn fiber(&self, p: usize) -> CVec {
        CVec::from_column_slice(&self.values[p])
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        self.space.check_same(&other.space)?;
        if self.fiber_dim != other.fiber_dim {
            return Err(Error::DimensionMismatch {
                expected: self.fiber_dim,
                found: other.fiber_dim,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(C64::from(-1.0)))
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        for f in &mut out.values {
            for x in f.iter_mut() {
                *x *= s;
            }
        }
        out
    }

    /// Right action of the algebra: `(f·a)(x) = f(x) a(x)`.
    pub fn act(&self, a: &AlgebraElement) -> Result<Self> {
        self.space.check_same(&a.space)?;
        let mut out = self.clone();
        for (f, s) in out.values.iter_mut().zip(&a.values) {
            for x in f.iter_mut() {
                *x *= s;
            }
        }
        Ok(out)
    }
}

/// `⟨f, g⟩(x) = ⟨f(x), g(x)⟩_H`, conjugate-linear in `f`.
pub fn inner_product(f: &ModuleVector, g: &ModuleVector) -> Result<AlgebraElement> {
    f.check_shape(g)?;
    let values = f
        .values
        .iter()
        .zip(&g.values)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x.conj() * y).sum())
        .collect();
    Ok(AlgebraElement {
        space: f.space.clone(),
        values,
    })
}

pub fn module_norm(f: &ModuleVector) -> f64 {
    f.values
        .iter()
        .map(|v| v.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .fold(0.0, f64::max)
        .sqrt()
}

/// `⟨x, y⟩ + ⟨Tx, Ty⟩` for vectors given through domain parameters of `t`.
pub fn graph_inner_product(t: &OperatorRep, x: &DomainVector, y: &DomainVector) -> Result<AlgebraElement> {
    let (xv, tx) = t.apply(x)?;
    let (yv, ty) = t.apply(y)?;
    inner_product(&xv, &yv)?.add(&inner_product(&tx, &ty)?)
}

/// Finitely generated submodule; over our spaces its closure is the per-node
/// span of the generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submodule {
    pub generators: Vec<ModuleVector>,
}

impl Submodule {
    pub fn new(generators: Vec<ModuleVector>) -> Result<Self> {
        if let Some(g0) = generators.first() {
            for g in &generators[1..] {
                g0.check_shape(g)?;
            }
        }
        Ok(Self { generators })
    }

    /// Generators evaluated at node `p`, one per column.
    pub fn fiber_matrix(&self, p: usize) -> CMat {
        let d = self.generators[0].fiber_dim;
        CMat::from_fn(d, self.generators.len(), |i, j| self.generators[j].values[p][i])
    }

    /// Orthonormal basis of the span at node `p`.
    pub fn fiber_basis(&self, p: usize) -> CMat {
        linalg::orth(&self.fiber_matrix(p), 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmoduleDistance {
    pub delta: f64,
    pub per_node: Vec<f64>,
}

pub fn submodule_distance(l: &Submodule, x0: &ModuleVector) -> Result<SubmoduleDistance> {
    let per_node: Vec<f64> = if l.generators.is_empty() {
        x0.values
            .iter()
            .map(|v| v.iter().map(|z| z.norm_sqr()).sum())
            .collect()
    } else {
        l.generators[0].check_shape(x0)?;
        (0..x0.space.len())
            .map(|p| {
                let q = l.fiber_basis(p);
                let v = x0.fiber(p);
                let r = &v - &q * (q.adjoint() * &v);
                r.norm_squared()
            })
            .collect()
    };
    let delta = per_node.iter().cloned().fold(0.0, f64::max);
    Ok(SubmoduleDistance { delta, per_node })
}
