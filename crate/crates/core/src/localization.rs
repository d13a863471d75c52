//! Localization of the module and of operators at a state.
//!
//! For a pure state at node `p` the localized space is the fiber `H` and
//! `i_ω f = f(p)`. For a measure it is the direct sum of the fibers over
//! nodes of positive mass with `i_ω f = (√w_p f(p))_p`.

use rayon::prelude::*;
use serde::Serialize;

use crate::cstar_space::{BaseSpace, State};
use crate::error::{Error, Result};
use crate::hilbert_module::{ModuleVector, Submodule};
use crate::linalg::{self, CMat, CVec, C64};
use crate::unbounded_ops::{DomainVector, FiberOp, OperatorRep};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizationResult {
    pub state: State,
    #[serde(skip)]
    pub space: BaseSpace,
    pub fiber_dim: usize,
    /// Support nodes with their weights, in increasing node order.
    pub nodes: Vec<(usize, f64)>,
    pub dim: usize,
    /// Nodes of zero mass; vectors supported there form the null space.
    pub null_nodes: Vec<usize>,
}

impl LocalizationResult {
    /// `i_ω(x)`.
    pub fn map(&self, x: &ModuleVector) -> Result<CVec> {
        self.space.check_same(&x.space)?;
        if x.fiber_dim != self.fiber_dim {
            return Err(Error::DimensionMismatch {
                expected: self.fiber_dim,
                found: x.fiber_dim,
            });
        }
        let mut out = CVec::zeros(self.dim);
        for (k, &(p, w)) in self.nodes.iter().enumerate() {
            let s = C64::from(w.sqrt());
            for i in 0..self.fiber_dim {
                out[k * self.fiber_dim + i] = x.values[p][i] * s;
            }
        }
        Ok(out)
    }

    /// Matrix of `i_ω` from stacked nodal coordinates.
    pub fn basis_map(&self) -> CMat {
        let d = self.fiber_dim;
        let mut m = CMat::zeros(self.dim, self.space.len() * d);
        for (k, &(p, w)) in self.nodes.iter().enumerate() {
            for i in 0..d {
                m[(k * d + i, p * d + i)] = C64::from(w.sqrt());
            }
        }
        m
    }
}

pub fn localize_module(space: &BaseSpace, fiber_dim: usize, state: &State) -> Result<LocalizationResult> {
    state.validate(space)?;
    let nodes = state.support();
    if nodes.is_empty() {
        return Err(Error::InvalidState("state has no mass".into()));
    }
    let null_nodes = (0..space.len()).filter(|p| !nodes.iter().any(|(q, _)| q == p)).collect();
    Ok(LocalizationResult {
        state: state.clone(),
        space: space.clone(),
        fiber_dim,
        dim: nodes.len() * fiber_dim,
        nodes,
        null_nodes,
    })
}

#[derive(Debug, Clone)]
pub struct LocalOperator {
    pub loc: LocalizationResult,
    pub fiber: FiberOp,
    /// Parameter offsets of each support node inside `fiber`.
    offsets: Vec<(usize, usize)>,
}

impl LocalOperator {
    /// Localized domain parameters of a domain vector.
    pub fn map_domain(&self, x: &DomainVector) -> Result<CVec> {
        let total = self.fiber.param_dim();
        let mut out = CVec::zeros(total);
        for (k, &(p, w)) in self.loc.nodes.iter().enumerate() {
            let (off, len) = self.offsets[k];
            if x.params[p].len() != len {
                return Err(Error::input("domain vector does not match the localized operator"));
            }
            out.rows_mut(off, len).copy_from(&(&x.params[p] * C64::from(w.sqrt())));
        }
        Ok(out)
    }

    /// Matrix of the localization when it is everywhere defined.
    pub fn matrix(&self) -> Result<CMat> {
        self.fiber.to_relation().operator_form()
    }
}

fn assemble(t: &OperatorRep, loc: &LocalizationResult, adjoint: bool) -> Result<LocalOperator> {
    t.space.check_same(&loc.space)?;
    let mut parts = Vec::with_capacity(loc.nodes.len());
    let mut offsets = Vec::with_capacity(loc.nodes.len());
    let mut off = 0;
    for &(p, _) in &loc.nodes {
        let f = if adjoint { t.adjoint_fiber_at(p)? } else { t.fiber_at(p)? };
        if f.hilbert_dim() != loc.fiber_dim {
            return Err(Error::DimensionMismatch {
                expected: loc.fiber_dim,
                found: f.hilbert_dim(),
            });
        }
        offsets.push((off, f.param_dim()));
        off += f.param_dim();
        parts.push(f);
    }
    Ok(LocalOperator {
        loc: loc.clone(),
        fiber: FiberOp::sum(parts),
        offsets,
    })
}

/// `T^ω`.
pub fn localize_operator(t: &OperatorRep, loc: &LocalizationResult) -> Result<LocalOperator> {
    assemble(t, loc, false)
}

/// `(T*)^ω`, the localization of the adjoint.
pub fn localize_adjoint(t: &OperatorRep, loc: &LocalizationResult) -> Result<LocalOperator> {
    assemble(t, loc, true)
}

/// Test vectors for the core criterion.
#[derive(Debug, Clone)]
pub enum CoreTargets {
    /// The whole localized domain (worst direction).
    Domain,
    /// Specific domain vectors; residuals are relative to their graph norms.
    Vectors(Vec<DomainVector>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoreReport {
    pub state: State,
    pub dim: usize,
    pub residual: f64,
    pub is_core: bool,
}

/// Decides, per state, whether `i_ω(subdomain)` is a core of `T^ω` by the
/// graph-norm projection residual of the targets.
pub fn check_core(
    t: &OperatorRep,
    subdomain: &Submodule,
    states: &[State],
    targets: &CoreTargets,
    tol: f64,
) -> Result<Vec<CoreReport>> {
    if states.is_empty() {
        return Err(Error::input("check_core needs at least one state"));
    }
    let fiber_dim = t.fiber_dim()?;
    let lifted: Vec<DomainVector> = subdomain
        .generators
        .iter()
        .map(|g| t.lift(g, 1e-8))
        .collect::<Result<_>>()?;
    states
        .par_iter()
        .map(|state| {
            let loc = localize_module(&t.space, fiber_dim, state)?;
            let local = localize_operator(t, &loc)?;
            let rel = local.fiber.to_relation();
            let k = rel.param_dim();
            // Per-node spans of the generators, block by block.
            let mut cols: Vec<CVec> = Vec::new();
            for (idx, &(p, _)) in loc.nodes.iter().enumerate() {
                let (off, len) = local.offsets[idx];
                for g in &lifted {
                    let mut v = CVec::zeros(k);
                    v.rows_mut(off, len).copy_from(&g.params[p]);
                    cols.push(v);
                }
            }
            let s = if cols.is_empty() {
                CMat::zeros(k, 0)
            } else {
                CMat::from_columns(&cols)
            };
            let gram = rel.gram();
            let l = gram
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Singular("graph Gram matrix is not positive definite".into()))?
                .l();
            let ls = l.adjoint() * &s;
            let q = linalg::orth(&ls, 1e-10);
            let residual = match targets {
                CoreTargets::Domain => {
                    if q.ncols() >= k {
                        0.0
                    } else {
                        1.0
                    }
                }
                CoreTargets::Vectors(vs) => {
                    let mut worst = 0.0f64;
                    for v in vs {
                        let c = local.map_domain(v)?;
                        let lc = l.adjoint() * &c;
                        let norm = lc.norm();
                        if norm == 0.0 {
                            continue;
                        }
                        let r = &lc - &q * (q.adjoint() * &lc);
                        worst = worst.max(r.norm() / norm);
                    }
                    worst
                }
            };
            Ok(CoreReport {
                state: state.clone(),
                dim: loc.dim,
                residual,
                is_core: residual <= tol,
            })
        })
        .collect()
}

/// Default density threshold for core decisions.
pub const CORE_TOL: f64 = 1e-6;
