//! Kato–Rellich and Wüst perturbation checks.
//!
//! A perturbation `V` is given by its action on the domain parameters of `T`
//! at every node, so `dom T ⊂ dom V` holds by construction and `T + V` is the
//! relation `(J, A + V)`.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use rand::Rng;
use serde::Serialize;

use crate::cstar_space::State;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64, I};
use crate::localization::{localize_module, localize_operator};
use crate::regularity::{local_global_check, RegularityVerdict};
use crate::unbounded_ops::{bounded_transform, FiberOp, OperatorRep, Relation};

#[derive(Debug, Clone)]
pub struct Perturbation {
    /// Per node, a `dim H × param_dim` matrix applied to the parameters of `T`.
    pub actions: Vec<CMat>,
}

fn relations(t: &OperatorRep) -> Result<Vec<Relation>> {
    (0..t.space.len()).map(|p| Ok(t.fiber_at(p)?.to_relation())).collect()
}

impl Perturbation {
    pub fn zero(t: &OperatorRep) -> Result<Self> {
        Ok(Self {
            actions: relations(t)?.iter().map(|r| CMat::zeros(r.hilbert_dim(), r.param_dim())).collect(),
        })
    }

    /// Everywhere defined bounded `B_p` at every node.
    pub fn bounded(t: &OperatorRep, mats: &[CMat]) -> Result<Self> {
        let rels = relations(t)?;
        if mats.len() != rels.len() {
            return Err(Error::DimensionMismatch {
                expected: rels.len(),
                found: mats.len(),
            });
        }
        let actions = rels
            .iter()
            .zip(mats)
            .map(|(r, b)| {
                if b.nrows() != r.hilbert_dim() || b.ncols() != r.hilbert_dim() {
                    return Err(Error::input("bounded perturbation has the wrong fiber size"));
                }
                Ok(b * &r.embed)
            })
            .collect::<Result<_>>()?;
        Ok(Self { actions })
    }

    /// Multiplication by a real function of the fiber variable on Dirac
    /// fibers (sampled at cell midpoints).
    pub fn multiplication(t: &OperatorRep, v: impl Fn(f64) -> f64) -> Result<Self> {
        let mats = (0..t.space.len())
            .map(|p| match t.fiber_at(p)? {
                FiberOp::Dirac(d) => {
                    let g = d.grid();
                    Ok(CMat::from_diagonal(&CVec::from_fn(g.cells(), |j, _| C64::from(v(g.midpoint(j))))))
                }
                _ => Err(Error::input("multiplication perturbations need Dirac fibers")),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::bounded(t, &mats)
    }

    /// `V = a T`.
    pub fn scaled(t: &OperatorRep, a: f64) -> Result<Self> {
        Ok(Self {
            actions: relations(t)?.iter().map(|r| &r.action * C64::from(a)).collect(),
        })
    }

    /// `V = s T + β T (I + T²)^{-1/2}`: for `s = -1` this is the relative
    /// bound one case and `‖Vx‖² ≤ ‖Tx‖² + β²‖x‖²` holds since the bounded
    /// part has the sign of `T`.
    pub fn scaled_plus_transform(t: &OperatorRep, s: f64, beta: f64) -> Result<Self> {
        let f = bounded_transform(t)?;
        let b: Vec<CMat> = f.iter().map(|m| m * C64::from(beta)).collect();
        Self::scaled(t, s)?.add(&Self::bounded(t, &b)?)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.actions.len() != other.actions.len() {
            return Err(Error::input("perturbations over different spaces"));
        }
        let actions = self
            .actions
            .iter()
            .zip(&other.actions)
            .map(|(a, b)| {
                if a.shape() != b.shape() {
                    return Err(Error::input("perturbations with different shapes"));
                }
                Ok(a + b)
            })
            .collect::<Result<_>>()?;
        Ok(Self { actions })
    }
}

/// `T + V` with domain `dom T`.
pub fn perturbed_operator(t: &OperatorRep, v: &Perturbation) -> Result<OperatorRep> {
    let rels = relations(t)?;
    if rels.len() != v.actions.len() {
        return Err(Error::input("perturbation does not match the operator"));
    }
    let fibers = rels
        .iter()
        .zip(&v.actions)
        .map(|(r, va)| Ok(FiberOp::Dense(r.plus_param_action(va)?)))
        .collect::<Result<_>>()?;
    OperatorRep::field(&t.space, fibers)
}

#[derive(Debug, Clone)]
pub struct PerturbationProblem {
    pub t: OperatorRep,
    pub v: Perturbation,
    /// Claimed relative bound.
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RelativeBound {
    pub a_hat: f64,
    pub b_hat: f64,
    pub samples: usize,
    /// `(node, excess)` for samples violating the claimed bound, if any.
    pub violations: Vec<(usize, f64)>,
}

struct Sample {
    node: usize,
    tx: f64,
    vx: f64,
}

/// Unit vectors of `dom T` at every node: eigenvectors of the energy
/// `‖Tx‖² / (‖x‖² + ‖Tx‖²)` plus random mixtures within energy windows.
fn spectral_samples<R: Rng + ?Sized>(t: &OperatorRep, v: &Perturbation, extra: usize, rng: &mut R) -> Result<Vec<Sample>> {
    let rels = relations(t)?;
    let mut out = Vec::new();
    for (p, (r, va)) in rels.iter().zip(&v.actions).enumerate() {
        let l = r
            .gram()
            .cholesky()
            .ok_or_else(|| Error::Singular("graph Gram matrix is not positive definite".into()))?
            .l();
        // Graph-orthonormal parameters: c = L^{-*} u.
        let to_params = linalg::inverse(&l.adjoint()).ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
        let a_n = &r.action * &to_params;
        let (_, vecs) = linalg::hermitian_eigen(&(a_n.adjoint() * &a_n));
        let k = vecs.ncols();
        let mut push = |u: CVec| {
            let c = &to_params * u;
            let x = (&r.embed * &c).norm();
            if x > 0.0 {
                out.push(Sample {
                    node: p,
                    tx: (&r.action * &c).norm() / x,
                    vx: (va * &c).norm() / x,
                });
            }
        };
        for j in 0..k {
            push(vecs.column(j).into_owned());
        }
        let windows = 8.min(k).max(1);
        for s in 0..extra {
            let w = s % windows;
            let (lo, hi) = (w * k / windows, ((w + 1) * k / windows).max(w * k / windows + 1));
            let coeffs = linalg::random_cvec(rng, hi - lo);
            push(vecs.columns(lo, hi - lo) * coeffs);
        }
        for _ in 0..extra.min(8) {
            push(linalg::random_cvec(rng, k));
        }
    }
    Ok(out)
}

/// Envelope fit of `‖Vx‖ ≤ a‖Tx‖ + b‖x‖` over spectral samples. Among all
/// valid pairs the one minimizing `aE + b` is returned, with `E` the
/// geometric mean of 1 and the largest sampled `‖Tx‖/‖x‖`, so that a
/// bounded `V` is fitted by `b` and a multiple of `T` by `a`.
pub fn relative_bound_estimate<R: Rng + ?Sized>(
    t: &OperatorRep,
    v: &Perturbation,
    claimed: Option<(f64, f64)>,
    extra_samples: usize,
    rng: &mut R,
) -> Result<RelativeBound> {
    let samples = spectral_samples(t, v, extra_samples, rng)?;
    let tmax = samples.iter().map(|s| s.tx).fold(0.0, f64::max);
    let vmax = samples.iter().map(|s| s.vx).fold(0.0, f64::max);
    let scale = tmax.max(1.0).sqrt();
    let (a_hat, b_hat) = if vmax == 0.0 {
        (0.0, 0.0)
    } else {
        let mut lp = Problem::new(OptimizationDirection::Minimize);
        let a = lp.add_var(scale, (0.0, f64::INFINITY));
        let b = lp.add_var(1.0, (0.0, f64::INFINITY));
        for s in &samples {
            lp.add_constraint([(a, s.tx / vmax), (b, 1.0 / vmax)], ComparisonOp::Ge, s.vx / vmax);
        }
        let sol = lp
            .solve()
            .map_err(|e| Error::Solver(format!("{e:?}")))?
            .into_solution()
            .map_err(|_| Error::Solver("LP interrupted".into()))?;
        (sol.var_value(a), sol.var_value(b))
    };
    let violations = match claimed {
        Some((ca, cb)) => samples
            .iter()
            .filter_map(|s| {
                let excess = s.vx - (ca * s.tx + cb);
                (excess > 1e-9 * (1.0 + s.vx)).then_some((s.node, excess))
            })
            .collect(),
        None => Vec::new(),
    };
    Ok(RelativeBound {
        a_hat,
        b_hat,
        samples: samples.len(),
        violations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct KatoRellichVerdict {
    /// `(μ, max_p ‖V(T - iμ)^{-1}‖, max_p ‖V(T + iμ)^{-1}‖)` for the scanned μ.
    pub scan: Vec<(f64, f64, f64)>,
    pub mu: Option<f64>,
    pub local: RegularityVerdict,
    pub selfadjoint_regular: bool,
}

fn resolvent_product_norm(r: &Relation, va: &CMat, z: C64) -> Result<f64> {
    if r.param_dim() != r.hilbert_dim() {
        return Err(Error::Singular("T is not an everywhere defined operator on the fiber".into()));
    }
    let shifted = &r.action - &r.embed * z;
    let inv = linalg::inverse(&shifted).ok_or_else(|| Error::Singular("T - z is not invertible".into()))?;
    Ok(linalg::op_norm(&(va * inv)))
}

/// Scans `μ = 2^k` for `‖V(T ∓ iμ)^{-1}‖ < 1`; then `T + V` is selfadjoint
/// and the defect numbers of its localizations are confirmed at `states`.
pub fn kato_rellich_check(problem: &PerturbationProblem, states: &[State], tau: f64) -> Result<KatoRellichVerdict> {
    if !(problem.a >= 0.0 && problem.b >= 0.0) {
        return Err(Error::input("relative bound constants must be nonnegative"));
    }
    if problem.a >= 1.0 {
        return Err(Error::Hypothesis(format!(
            "relative bound a = {} is not below 1; Kato–Rellich does not apply, use the Wüst check",
            problem.a
        )));
    }
    let rels = relations(&problem.t)?;
    let mut scan = Vec::new();
    let mut mu_found = None;
    for k in 0..=40 {
        let mu = 2f64.powi(k);
        let (mut qm, mut qp) = (0.0f64, 0.0f64);
        for (r, va) in rels.iter().zip(&problem.v.actions) {
            qm = qm.max(resolvent_product_norm(r, va, I * mu)?);
            qp = qp.max(resolvent_product_norm(r, va, -I * mu)?);
        }
        scan.push((mu, qm, qp));
        if qm < 1.0 && qp < 1.0 {
            mu_found = Some(mu);
            break;
        }
    }
    let local = local_global_check(&perturbed_operator(&problem.t, &problem.v)?, states, tau)?;
    Ok(KatoRellichVerdict {
        selfadjoint_regular: mu_found.is_some() && local.selfadjoint_regular,
        scan,
        mu: mu_found,
        local,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WustVerdict {
    /// Smallest eigenvalue of `A*A + b J*J - V*V` relative to its scale,
    /// over nodes.
    pub inequality_margin: f64,
    /// Smallest `‖T^ω x‖² + b‖x‖² - ‖V^ω x‖²` (relative) over localized samples.
    pub localized_margin: f64,
    pub localized_samples: usize,
    pub local: RegularityVerdict,
    pub selfadjoint_regular: bool,
}

/// Checks `⟨Vx, Vx⟩ ≤ ⟨Tx, Tx⟩ + b⟨x, x⟩` as an operator inequality at every
/// node, its localized form at every state, and the defect numbers of the
/// localizations of `T + V`.
pub fn wust_check<R: Rng + ?Sized>(
    problem: &PerturbationProblem,
    states: &[State],
    samples: usize,
    tau: f64,
    rng: &mut R,
) -> Result<WustVerdict> {
    let rels = relations(&problem.t)?;
    let mut margin = f64::INFINITY;
    for (p, (r, va)) in rels.iter().zip(&problem.v.actions).enumerate() {
        let m = r.action.adjoint() * &r.action + r.embed.adjoint() * &r.embed * C64::from(problem.b)
            - va.adjoint() * va;
        let scale = 1.0 + linalg::op_norm(&r.gram()) * (1.0 + problem.b);
        let lo = linalg::hermitian_eigen(&((&m + m.adjoint()) * C64::from(0.5))).0[0] / scale;
        margin = margin.min(lo);
        if lo < -1e-10 {
            return Err(Error::Hypothesis(format!(
                "⟨Vx,Vx⟩ ≤ ⟨Tx,Tx⟩ + b⟨x,x⟩ fails at node {p} (relative margin {lo:.3e})"
            )));
        }
    }
    let tv = perturbed_operator(&problem.t, &problem.v)?;
    let fiber_dim = problem.t.fiber_dim()?;
    let mut localized_margin = f64::INFINITY;
    for state in states {
        let loc = localize_module(&problem.t.space, fiber_dim, state)?;
        let lt = localize_operator(&problem.t, &loc)?;
        let ltv = localize_operator(&tv, &loc)?;
        for _ in 0..samples {
            let x = problem.t.random_domain_vector(rng)?;
            let c = lt.map_domain(&x)?;
            let ix = lt.fiber.embed(&c);
            let tx = lt.fiber.apply(&c);
            let vx = ltv.fiber.apply(&c) - &tx;
            let rhs = tx.norm_squared() + problem.b * ix.norm_squared();
            let gap = (rhs - vx.norm_squared()) / (1.0 + rhs);
            localized_margin = localized_margin.min(gap);
        }
    }
    if localized_margin < -1e-10 {
        return Err(Error::Hypothesis(format!(
            "localized inequality fails (relative margin {localized_margin:.3e})"
        )));
    }
    let local = local_global_check(&tv, states, tau)?;
    Ok(WustVerdict {
        inequality_margin: margin,
        localized_margin,
        localized_samples: samples * states.len(),
        selfadjoint_regular: local.selfadjoint_regular,
        local,
    })
}

/// `V = aT + B` with a random Hermitian `B` of norm `β` at every node and
/// `b = β²/(1 - a²)`, which satisfies both hypotheses when `a < 1`.
pub fn random_agreement_instance<R: Rng + ?Sized>(t: &OperatorRep, a: f64, beta: f64, rng: &mut R) -> Result<PerturbationProblem> {
    let d = t.fiber_dim()?;
    let mats: Vec<CMat> = (0..t.space.len())
        .map(|_| {
            let h = linalg::random_hermitian(rng, d);
            let n = linalg::op_norm(&h).max(1e-300);
            h * C64::from(beta / n)
        })
        .collect();
    let v = Perturbation::scaled(t, a)?.add(&Perturbation::bounded(t, &mats)?)?;
    Ok(PerturbationProblem {
        t: t.clone(),
        v,
        a,
        b: beta * beta / (1.0 - a * a) * (1.0 + 1e-9),
    })
}
