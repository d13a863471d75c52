//! Unbounded operators on `C(X, H)` given fiber by fiber.

pub mod calculus;
pub mod dirac;
pub mod fiber;

use std::sync::Arc;

use serde::Serialize;

use crate::cstar_space::{AlgebraElement, BaseSpace};
use crate::error::{Error, Result};
use crate::hilbert_module::ModuleVector;
use crate::linalg::{CMat, CVec, C64};
use crate::regularity::lambda::{classify_lambda, LambdaClassification, LambdaSpec, PointClass};

pub use calculus::{bounded_transform, build_hat, functional_calculus, resolvent, FunctionSymbol, ResolventResult};
pub use dirac::{default_tau, DeficiencyData, DiracGrid};
pub use fiber::{DefectReport, DiracFiber, DiracLabel, FiberOp, RangeReport, Relation};

/// `T_Λ` over an interval grid: boundary data per node, materialized on
/// demand.
#[derive(Debug, Clone)]
pub struct BoundaryField {
    pub classification: LambdaClassification,
    pub data: Arc<DeficiencyData>,
}

impl BoundaryField {
    pub fn fiber_at(&self, x: f64) -> DiracFiber {
        match self.classification.locate(x) {
            PointClass::Regular { value } => DiracFiber::extension(self.data.clone(), value),
            _ => DiracFiber::min(self.data.clone()),
        }
    }

    /// Fiber of the localization of `T_Λ*`.
    pub fn adjoint_fiber_at(&self, x: f64) -> DiracFiber {
        match self.classification.locate(x) {
            PointClass::Regular { value } => DiracFiber::extension(self.data.clone(), value),
            PointClass::Extendable { extension } => DiracFiber::extension(self.data.clone(), extension),
            PointClass::Interior => DiracFiber::max(self.data.clone()),
            PointClass::Singular => DiracFiber::min(self.data.clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub enum OperatorKind {
    /// Node ↦ square matrix, everywhere defined.
    Diagonal(Vec<CMat>),
    Multiplication { element: AlgebraElement, fiber_dim: usize },
    /// The same fiber at every node.
    Constant(FiberOp),
    /// Node ↦ fiber relation.
    Field(Vec<FiberOp>),
    /// `T_Λ` (or its adjoint when `adjoint` is set).
    Boundary { field: Arc<BoundaryField>, adjoint: bool },
    /// `[[0, T*], [T, 0]]`.
    Hat(Box<OperatorRep>),
}

#[derive(Debug, Clone)]
pub struct OperatorRep {
    pub space: BaseSpace,
    pub kind: OperatorKind,
}

/// A domain element given through fiber parameters at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainVector {
    pub space: BaseSpace,
    pub params: Vec<CVec>,
}

impl OperatorRep {
    pub fn diagonal(space: &BaseSpace, mats: Vec<CMat>) -> Result<Self> {
        if mats.len() != space.len() {
            return Err(Error::DimensionMismatch {
                expected: space.len(),
                found: mats.len(),
            });
        }
        let d = mats[0].nrows();
        if mats.iter().any(|m| m.nrows() != d || m.ncols() != d) {
            return Err(Error::input("diagonal field needs square matrices of one size"));
        }
        Ok(Self {
            space: space.clone(),
            kind: OperatorKind::Diagonal(mats),
        })
    }

    pub fn multiplication(element: &AlgebraElement, fiber_dim: usize) -> Self {
        Self {
            space: element.space.clone(),
            kind: OperatorKind::Multiplication {
                element: element.clone(),
                fiber_dim,
            },
        }
    }

    pub fn constant(space: &BaseSpace, fiber: FiberOp) -> Self {
        Self {
            space: space.clone(),
            kind: OperatorKind::Constant(fiber),
        }
    }

    /// A single Hilbert-space operator, viewed over a one-point space.
    pub fn single(fiber: FiberOp) -> Self {
        Self::constant(&BaseSpace::finite(1).expect("one point"), fiber)
    }

    pub fn field(space: &BaseSpace, fibers: Vec<FiberOp>) -> Result<Self> {
        if fibers.len() != space.len() {
            return Err(Error::DimensionMismatch {
                expected: space.len(),
                found: fibers.len(),
            });
        }
        Ok(Self {
            space: space.clone(),
            kind: OperatorKind::Field(fibers),
        })
    }

    pub fn fiber_at(&self, p: usize) -> Result<FiberOp> {
        if p >= self.space.len() {
            return Err(Error::InvalidState(format!("node {p} out of range")));
        }
        Ok(match &self.kind {
            OperatorKind::Diagonal(m) => FiberOp::operator(m[p].clone()),
            OperatorKind::Multiplication { element, fiber_dim } => {
                FiberOp::operator(CMat::identity(*fiber_dim, *fiber_dim) * element.values[p])
            }
            OperatorKind::Constant(f) => f.clone(),
            OperatorKind::Field(fs) => fs[p].clone(),
            OperatorKind::Boundary { field, adjoint } => {
                let x = self.space.coord(p);
                FiberOp::Dirac(if *adjoint { field.adjoint_fiber_at(x) } else { field.fiber_at(x) })
            }
            OperatorKind::Hat(inner) => {
                let t = inner.fiber_at(p)?.to_relation();
                let ts = inner.adjoint_fiber_at(p)?.to_relation();
                FiberOp::Dense(t.hat(&ts))
            }
        })
    }

    /// Fiber of the localization of `T*` at the pure state of node `p`.
    pub fn adjoint_fiber_at(&self, p: usize) -> Result<FiberOp> {
        match &self.kind {
            OperatorKind::Boundary { field, adjoint } => {
                let x = self.space.coord(p);
                Ok(FiberOp::Dirac(if *adjoint { field.fiber_at(x) } else { field.adjoint_fiber_at(x) }))
            }
            OperatorKind::Hat(_) => self.fiber_at(p),
            _ => Ok(self.fiber_at(p)?.adjoint()),
        }
    }

    pub fn adjoint(&self) -> Result<OperatorRep> {
        let kind = match &self.kind {
            OperatorKind::Diagonal(m) => OperatorKind::Diagonal(m.iter().map(|x| x.adjoint()).collect()),
            OperatorKind::Multiplication { element, fiber_dim } => OperatorKind::Multiplication {
                element: element.adjoint(),
                fiber_dim: *fiber_dim,
            },
            OperatorKind::Constant(f) => OperatorKind::Constant(f.adjoint()),
            OperatorKind::Field(fs) => OperatorKind::Field(fs.iter().map(|f| f.adjoint()).collect()),
            OperatorKind::Boundary { field, adjoint } => OperatorKind::Boundary {
                field: field.clone(),
                adjoint: !adjoint,
            },
            OperatorKind::Hat(_) => self.kind.clone(),
        };
        Ok(OperatorRep {
            space: self.space.clone(),
            kind,
        })
    }

    pub fn fiber_dim(&self) -> Result<usize> {
        Ok(self.fiber_at(0)?.hilbert_dim())
    }

    pub fn param_dims(&self) -> Result<Vec<usize>> {
        (0..self.space.len()).map(|p| Ok(self.fiber_at(p)?.param_dim())).collect()
    }

    /// `(x, Tx)` for a domain vector.
    pub fn apply(&self, x: &DomainVector) -> Result<(ModuleVector, ModuleVector)> {
        self.space.check_same(&x.space)?;
        let mut xs = Vec::with_capacity(self.space.len());
        let mut ys = Vec::with_capacity(self.space.len());
        for p in 0..self.space.len() {
            let f = self.fiber_at(p)?;
            if x.params[p].len() != f.param_dim() {
                return Err(Error::input(format!(
                    "domain vector has {} parameters at node {p}, operator expects {}",
                    x.params[p].len(),
                    f.param_dim()
                )));
            }
            xs.push(f.embed(&x.params[p]));
            ys.push(f.apply(&x.params[p]));
        }
        Ok((
            ModuleVector::from_fibers(&self.space, xs)?,
            ModuleVector::from_fibers(&self.space, ys)?,
        ))
    }

    /// Domain parameters of a module vector, or an error if it is outside
    /// the recorded domain.
    pub fn lift(&self, x: &ModuleVector, tol: f64) -> Result<DomainVector> {
        self.space.check_same(&x.space)?;
        let params = (0..self.space.len())
            .map(|p| self.fiber_at(p)?.lift(&x.fiber(p), tol))
            .collect::<Result<Vec<_>>>()?;
        Ok(DomainVector {
            space: self.space.clone(),
            params,
        })
    }

    pub fn random_domain_vector<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<DomainVector> {
        let params = self
            .param_dims()?
            .into_iter()
            .map(|k| crate::linalg::random_cvec(rng, k))
            .collect();
        Ok(DomainVector {
            space: self.space.clone(),
            params,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Box,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" | "midpoint" => Ok(Scheme::Box),
            other => Err(Error::UnsupportedScheme(other.to_string())),
        }
    }
}

/// The minimal and maximal realizations of `-i d/dx` on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct DiracPair {
    pub data: Arc<DeficiencyData>,
    pub min: OperatorRep,
    pub max: OperatorRep,
    pub scheme: Scheme,
}

pub fn build_dirac_interval(nodes: usize, scheme: &str) -> Result<DiracPair> {
    let scheme: Scheme = scheme.parse()?;
    if nodes < 16 {
        return Err(Error::input(format!("the interval grid needs at least 16 nodes, got {nodes}")));
    }
    let grid = DiracGrid::new(nodes)?;
    let data = Arc::new(DeficiencyData::compute(grid, default_tau(nodes))?);
    let min = OperatorRep::single(FiberOp::Dirac(DiracFiber::min(data.clone())));
    let max = OperatorRep::single(FiberOp::Dirac(DiracFiber::max(data.clone())));
    Ok(DiracPair { data, min, max, scheme })
}

/// Recomputes the deficiency data of a pair at the threshold `tau`.
pub fn deficiency_data(pair: &DiracPair, tau: f64) -> Result<Arc<DeficiencyData>> {
    if tau == pair.data.tau {
        return Ok(pair.data.clone());
    }
    Ok(Arc::new(DeficiencyData::compute(pair.data.grid, tau)?))
}

pub fn check_unimodular(lambda: C64) -> Result<()> {
    if (lambda.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::input(format!("λ = {lambda} is not unimodular")));
    }
    Ok(())
}

/// `D_λ`: `D_max` restricted to `α_+(ξ) = λ α_-(ξ)`.
pub fn build_extension(data: &Arc<DeficiencyData>, lambda: C64) -> Result<OperatorRep> {
    check_unimodular(lambda)?;
    Ok(OperatorRep::single(FiberOp::Dirac(DiracFiber::extension(data.clone(), lambda))))
}

/// `T_Λ` with its companions `T_min` and `T_max` over an interval grid
/// whose nodes include every breakpoint of `Λ`.
pub fn build_boundary_field(
    lambda: &LambdaSpec,
    space: &BaseSpace,
    fiber_nodes: usize,
) -> Result<(OperatorRep, OperatorRep, OperatorRep)> {
    let classification = classify_lambda(lambda)?;
    match space {
        BaseSpace::Grid { a, b, .. } if (*a - lambda.a).abs() < 1e-12 && (*b - lambda.b).abs() < 1e-12 => {}
        _ => return Err(Error::input("Λ must be declared on the interval of the base grid")),
    }
    for bp in &lambda.breakpoints {
        if space.node_at(bp.at).is_none() {
            return Err(Error::input(format!(
                "breakpoint {} is not a node of the base grid; choose n so that it is",
                bp.at
            )));
        }
    }
    let pair = build_dirac_interval(fiber_nodes, "box")?;
    let field = Arc::new(BoundaryField {
        classification,
        data: pair.data.clone(),
    });
    let t = OperatorRep {
        space: space.clone(),
        kind: OperatorKind::Boundary { field, adjoint: false },
    };
    let tmin = OperatorRep::constant(space, FiberOp::Dirac(DiracFiber::min(pair.data.clone())));
    let tmax = OperatorRep::constant(space, FiberOp::Dirac(DiracFiber::max(pair.data)));
    Ok((t, tmin, tmax))
}
