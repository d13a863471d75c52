//! Numerical regularity and selfadjointness checks built on localizations.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cstar_space::{BaseSpace, State};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64};
use crate::localization::{localize_adjoint, localize_module, localize_operator, LocalOperator};
use crate::unbounded_ops::{
    build_boundary_field, DefectReport, DiracFiber, FiberOp, OperatorKind, OperatorRep, RangeReport, Relation,
};

use super::lambda::{LambdaSpec, PointClass};

/// Symmetry tolerance for localized relations.
pub const SYM_TOL: f64 = 1e-8;
/// Tolerance on the gap between two graphs.
pub const GRAPH_GAP_TOL: f64 = 1e-6;

pub fn defect_indices(local: &LocalOperator, tau: f64) -> Result<DefectReport> {
    local.fiber.defect(tau, SYM_TOL)
}

#[derive(Debug, Clone, Serialize)]
pub struct RangeVerdict {
    pub plus_dense: bool,
    pub minus_dense: bool,
    pub per_node: Vec<RangeReport>,
}

/// Surjectivity of `T ± iμ` at every node of the model.
pub fn check_range_dense(t: &OperatorRep, mu: f64, tau: f64) -> Result<RangeVerdict> {
    if mu == 0.0 {
        return Err(Error::input("μ must be nonzero"));
    }
    let per_node: Vec<RangeReport> = (0..t.space.len())
        .into_par_iter()
        .map(|p| Ok(t.fiber_at(p)?.range_report(mu.abs(), tau)))
        .collect::<Result<_>>()?;
    Ok(RangeVerdict {
        plus_dense: per_node.iter().all(|r| r.codim_plus == 0),
        minus_dense: per_node.iter().all(|r| r.codim_minus == 0),
        per_node,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub state: State,
    /// Which verdict this state refutes.
    pub refutes: String,
    /// Defect numbers of the relevant localization, when it is symmetric.
    pub defects: Option<[usize; 2]>,
    pub sigma_min: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityVerdict {
    pub regular: bool,
    pub selfadjoint: bool,
    pub selfadjoint_regular: bool,
    pub adjoint_selfadjoint_regular: bool,
    pub witnesses: Vec<Witness>,
    pub states_checked: usize,
    pub tau: f64,
}

#[derive(Debug, Clone)]
struct StateFindings {
    state: State,
    adjoint_gap: f64,
    self_gap: f64,
    defect: std::result::Result<DefectReport, f64>,
    adjoint_defect: std::result::Result<DefectReport, f64>,
}

fn examine(t: &OperatorRep, state: &State, tau: f64) -> Result<StateFindings> {
    let loc = localize_module(&t.space, t.fiber_dim()?, state)?;
    let l = localize_operator(t, &loc)?.fiber;
    let ls = localize_adjoint(t, &loc)?.fiber;
    let defect_of = |f: &FiberOp| -> Result<std::result::Result<DefectReport, f64>> {
        match f.defect(tau, SYM_TOL) {
            Ok(r) => Ok(Ok(r)),
            Err(Error::NotSymmetric { residual }) => Ok(Err(residual)),
            Err(e) => Err(e),
        }
    };
    Ok(StateFindings {
        state: state.clone(),
        adjoint_gap: ls.distance(&l.adjoint()),
        self_gap: ls.distance(&l),
        defect: defect_of(&l)?,
        adjoint_defect: defect_of(&ls)?,
    })
}

fn defect_witness(state: &State, refutes: &str, d: &std::result::Result<DefectReport, f64>, what: &str) -> Witness {
    match d {
        Ok(r) => Witness {
            state: state.clone(),
            refutes: refutes.into(),
            defects: Some([r.n_plus, r.n_minus]),
            sigma_min: r.margin(),
            detail: format!("{what} has defect numbers ({}, {})", r.n_plus, r.n_minus),
        },
        Err(res) => Witness {
            state: state.clone(),
            refutes: refutes.into(),
            defects: None,
            sigma_min: 0.0,
            detail: format!("{what} is not symmetric (residual {res:.3e})"),
        },
    }
}

/// Samples the localizations of `T` and `T*` at the given states and
/// decides regularity and selfadjointness from them.
pub fn local_global_check(t: &OperatorRep, states: &[State], tau: f64) -> Result<RegularityVerdict> {
    if states.is_empty() {
        return Err(Error::input("local_global_check needs at least one state"));
    }
    let findings: Vec<StateFindings> = states.par_iter().map(|s| examine(t, s, tau)).collect::<Result<_>>()?;
    let mut witnesses = Vec::new();
    let mut first = |pred: &dyn Fn(&StateFindings) -> bool, make: &dyn Fn(&StateFindings) -> Witness| -> bool {
        match findings.iter().find(|f| !pred(f)) {
            Some(f) => {
                witnesses.push(make(f));
                false
            }
            None => true,
        }
    };
    let ok = |d: &std::result::Result<DefectReport, f64>| matches!(d, Ok(r) if r.is_selfadjoint());
    let regular = first(&|f| f.adjoint_gap <= GRAPH_GAP_TOL, &|f| Witness {
        state: f.state.clone(),
        refutes: "regular".into(),
        defects: f.defect.as_ref().ok().map(|r| [r.n_plus, r.n_minus]),
        sigma_min: f.defect.as_ref().map(|r| r.margin()).unwrap_or(0.0),
        detail: format!("localization of T* differs from the adjoint of the localization (gap {:.3e})", f.adjoint_gap),
    });
    let selfadjoint = first(&|f| f.self_gap <= GRAPH_GAP_TOL, &|f| Witness {
        state: f.state.clone(),
        refutes: "selfadjoint".into(),
        defects: f.defect.as_ref().ok().map(|r| [r.n_plus, r.n_minus]),
        sigma_min: f.defect.as_ref().map(|r| r.margin()).unwrap_or(0.0),
        detail: format!("localizations of T and T* differ (gap {:.3e})", f.self_gap),
    });
    let selfadjoint_regular = first(&|f| ok(&f.defect), &|f| {
        defect_witness(&f.state, "selfadjoint_regular", &f.defect, "localization of T")
    });
    let adjoint_selfadjoint_regular = first(&|f| ok(&f.adjoint_defect), &|f| {
        defect_witness(&f.state, "adjoint_selfadjoint_regular", &f.adjoint_defect, "localization of T*")
    });
    Ok(RegularityVerdict {
        regular,
        selfadjoint,
        selfadjoint_regular,
        adjoint_selfadjoint_regular,
        witnesses,
        states_checked: states.len(),
        tau,
    })
}

/// All pure states of the base space.
pub fn pure_states(space: &BaseSpace) -> Vec<State> {
    (0..space.len()).map(State::pure).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasureReport {
    pub hypotheses_hold: bool,
    pub violations: Vec<String>,
    /// Defect numbers of the localization at the measure.
    pub measure_defect: DefectReport,
    /// Pure states at the boundary of the regular set, with their defects.
    pub pure_witnesses: Vec<Witness>,
    /// Largest `|⟨f, η^⊥_Λ⟩_{T,μ}| / ‖f‖_{T,μ}` over random domain vectors.
    pub orthogonality_residual: f64,
    /// Largest boundary residual after removing the `η^⊥_Λ` component from
    /// random vectors of the maximal domain.
    pub converse_residual: f64,
    pub samples: usize,
}

/// Localization of `T_Λ` at a measure with the boundary of `reg(Λ)`
/// carrying no mass.
pub fn measure_localization_analysis<R: Rng + ?Sized>(
    spec: &LambdaSpec,
    space: &BaseSpace,
    mu: &State,
    fiber_nodes: usize,
    tau: f64,
    samples: usize,
    rng: &mut R,
) -> Result<MeasureReport> {
    let State::Measure { weights } = mu else {
        return Err(Error::InvalidState("measure localization needs a measure".into()));
    };
    mu.validate(space)?;
    let (t, _, _) = build_boundary_field(spec, space, fiber_nodes)?;
    let field = match &t.kind {
        OperatorKind::Boundary { field, .. } => field.clone(),
        _ => unreachable!("boundary field"),
    };
    let classification = &field.classification;
    let mut violations = Vec::new();
    let mut boundary_nodes = Vec::new();
    for p in 0..space.len() {
        let x = space.coord(p);
        match classification.locate(x) {
            PointClass::Regular { .. } if weights[p] <= 0.0 => {
                violations.push(format!("regular node {x} carries no mass"));
            }
            PointClass::Interior => violations.push(format!("node {x} lies in the interior of the singular support")),
            PointClass::Extendable { .. } | PointClass::Singular => {
                boundary_nodes.push(p);
                if weights[p] > 0.0 {
                    violations.push(format!("boundary node {x} of the regular set carries mass {}", weights[p]));
                }
            }
            _ => {}
        }
    }
    let fiber_dim = field.data.grid.cells();
    let loc = localize_module(space, fiber_dim, mu)?;
    let local = localize_operator(&t, &loc)?;
    let measure_defect = local.fiber.defect(tau, SYM_TOL)?;

    let mut pure_witnesses = Vec::new();
    for &p in &boundary_nodes {
        let ploc = localize_module(space, fiber_dim, &State::pure(p))?;
        let r = localize_operator(&t, &ploc)?.fiber.defect(tau, SYM_TOL)?;
        pure_witnesses.push(Witness {
            state: State::pure(p),
            refutes: "selfadjoint_regular".into(),
            defects: Some([r.n_plus, r.n_minus]),
            sigma_min: r.margin(),
            detail: format!("pure state at the boundary point {}", space.coord(p)),
        });
    }

    // ⟨f, η^⊥_Λ⟩_{T,μ} = Σ_p w_p ⟨f(p), η^⊥_{Λ(p)}⟩_D on the regular nodes.
    let grid = field.data.grid;
    let support: Vec<(usize, f64, C64)> = loc
        .nodes
        .iter()
        .filter_map(|&(p, w)| match classification.locate(space.coord(p)) {
            PointClass::Regular { value } => Some((p, w, value)),
            _ => None,
        })
        .collect();
    let mut orth = 0.0f64;
    let mut converse = 0.0f64;
    for _ in 0..samples {
        let (mut ip, mut norm2) = (C64::from(0.0), 0.0);
        let (mut ip_max, mut norm2_max) = (Vec::new(), 0.0);
        for &(_, w, lam) in &support {
            let fib = DiracFiber::extension(field.data.clone(), lam);
            let c = linalg::random_cvec(rng, fib.param_dim());
            let f = fib.nodal(&c);
            let ep = field.data.eta_perp(lam);
            ip += grid.graph_inner(&f, &ep) * w;
            norm2 += grid.graph_inner(&f, &f).re * w;

            let g = linalg::random_cvec(rng, grid.nodes);
            let coef = grid.graph_inner(&ep, &g);
            let projected = &g - &ep * coef;
            let b = CVec::from_vec(vec![projected[0], projected[grid.cells()]]);
            let out = &b - fib.boundary_basis() * (fib.boundary_basis().adjoint() * &b);
            ip_max.push(out.norm() / b.norm().max(1e-300));
            norm2_max += w;
        }
        if norm2 > 0.0 {
            orth = orth.max(ip.norm() / norm2.sqrt());
        }
        let _ = norm2_max;
        converse = converse.max(ip_max.into_iter().fold(0.0, f64::max));
    }
    Ok(MeasureReport {
        hypotheses_hold: violations.is_empty(),
        violations,
        measure_defect,
        pure_witnesses,
        orthogonality_residual: orth,
        converse_residual: converse,
        samples,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AdjointabilityReport {
    pub adjointable: bool,
    /// Largest relative defect of `⟨ι x, y⟩ = ⟨x, C y⟩_T` over samples.
    pub residual: f64,
    /// States where `I + (T*)^ω T^ω` misses part of the space, with the
    /// codimension of its range.
    pub range_gaps: Vec<(State, usize)>,
}

/// Range codimension of `I + L'L` and, when it is onto, `C = (I + L'L)^{-1}`
/// as a map into the parameters of `L`.
fn inverse_of_one_plus(l: &Relation, lp: &Relation) -> (usize, Option<CMat>) {
    let n = l.hilbert_dim();
    let k = l.param_dim();
    let constraint = linalg::hstack(&l.action, &(-&lp.embed));
    let kernel = linalg::null_space(&constraint, 1e-12);
    let image = linalg::hstack(&l.embed, &lp.action) * &kernel;
    let r = linalg::rank(&image, 1e-10);
    let codim = n - r.min(n);
    if codim > 0 {
        return (codim, None);
    }
    // Solve image · a = y in the least-squares sense; parameters c = K_top a.
    let pinv = image.clone().pseudo_inverse(1e-12).expect("pseudo inverse");
    let ktop = kernel.rows(0, k).into_owned();
    (0, Some(ktop * pinv))
}

/// Adjointability of the graph embedding `ι_T : (dom T, ⟨·,·⟩_T) → E` at the
/// given states.
pub fn graph_embedding_adjointability<R: Rng + ?Sized>(
    t: &OperatorRep,
    states: &[State],
    samples: usize,
    tol: f64,
    rng: &mut R,
) -> Result<AdjointabilityReport> {
    let fiber_dim = t.fiber_dim()?;
    let mut residual = 0.0f64;
    let mut range_gaps = Vec::new();
    for state in states {
        let loc = localize_module(&t.space, fiber_dim, state)?;
        let l = localize_operator(t, &loc)?.fiber.to_relation();
        let lp = localize_adjoint(t, &loc)?.fiber.to_relation();
        let (codim, c) = inverse_of_one_plus(&l, &lp);
        let Some(c) = c else {
            range_gaps.push((state.clone(), codim));
            continue;
        };
        for _ in 0..samples {
            let ct = linalg::random_cvec(rng, l.param_dim());
            let y = linalg::random_cvec(rng, l.hilbert_dim());
            let cy = &c * &y;
            let lhs = (&l.embed * &ct).dotc(&y);
            let rhs = (&l.embed * &ct).dotc(&(&l.embed * &cy)) + (&l.action * &ct).dotc(&(&l.action * &cy));
            let scale = (&l.embed * &ct).norm() * y.norm();
            residual = residual.max((lhs - rhs).norm() / scale.max(1e-300));
        }
    }
    Ok(AdjointabilityReport {
        adjointable: range_gaps.is_empty() && residual <= tol,
        residual,
        range_gaps,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FinitelyGeneratedReport {
    pub trials: usize,
    pub symmetric_selfadjoint_everywhere: bool,
    pub adjoint_pairs_match: bool,
    pub max_adjoint_gap: f64,
    pub regular: bool,
}

/// Random operator fields over a finite space: symmetric ones must be
/// selfadjoint at every pure state and every field must have localizations
/// of its adjoint equal to the adjoints of its localizations.
pub fn finitely_generated_commutative_check<R: Rng + ?Sized>(
    space: &BaseSpace,
    fiber_dim: usize,
    trials: usize,
    tau: f64,
    rng: &mut R,
) -> Result<FinitelyGeneratedReport> {
    if !matches!(space, BaseSpace::Points { .. }) {
        return Err(Error::input("the finitely generated check needs a finite space"));
    }
    let states = pure_states(space);
    let mut sym_ok = true;
    let mut pair_ok = true;
    let mut max_gap = 0.0f64;
    for _ in 0..trials {
        let herm: Vec<CMat> = (0..space.len()).map(|_| linalg::random_hermitian(rng, fiber_dim)).collect();
        let v = local_global_check(&OperatorRep::diagonal(space, herm)?, &states, tau)?;
        sym_ok &= v.selfadjoint_regular && v.regular;
        let general: Vec<CMat> = (0..space.len()).map(|_| linalg::random_cmat(rng, fiber_dim, fiber_dim)).collect();
        let t = OperatorRep::diagonal(space, general)?;
        for p in 0..space.len() {
            let gap = t.adjoint_fiber_at(p)?.distance(&t.fiber_at(p)?.adjoint());
            max_gap = max_gap.max(gap);
        }
        pair_ok &= local_global_check(&t, &states, tau)?.regular;
    }
    pair_ok &= max_gap <= GRAPH_GAP_TOL;
    Ok(FinitelyGeneratedReport {
        trials,
        symmetric_selfadjoint_everywhere: sym_ok,
        adjoint_pairs_match: pair_ok,
        max_adjoint_gap: max_gap,
        regular: sym_ok && pair_ok,
    })
}
