//! The sum operator `D = [[0, S - iT], [S + iT, 0]]` for a pair of
//! selfadjoint regular operators with bounded commutator resolvents.
//!
//! The models are truncations: every fiber carries Hermitian matrices `S`,
//! `T` and the commutator `[S, T]` as it acts on the core. For the Hermite
//! pair the commutator is the compression of the product computed one size
//! up, which equals `-i I` exactly; the other models use the matrix
//! commutator, which is exact for them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cstar_space::{AlgebraElement, BaseSpace, State};
use crate::error::{Error, Result};
use crate::hilbert_module::{ModuleVector, Submodule};
use crate::linalg::{self, CMat, CVec, C64, I};
use crate::localization::{check_core, localize_module, localize_operator, CoreTargets, CORE_TOL};
use crate::regularity::{local_global_check, RegularityVerdict};
use crate::unbounded_ops::{build_dirac_interval, build_extension, OperatorRep, Relation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum SumModelSpec {
    /// Momentum and position on the first `dim` Hermite functions.
    Hermite { dim: usize },
    /// `S = -i d/dt` on Fourier modes `|k| ≤ modes` of the circle and `T`
    /// multiplication by `m(t) = Σ_j c_j e^{2πijt} + c.c.` (`j ≥ 1`) plus
    /// the real constant `c_0`.
    Fourier { modes: usize, coefficients: Vec<(i64, C64)> },
    /// `S = D_{λ=1}` on a box grid with `fiber_nodes` nodes, `T`
    /// multiplication by `cos(2πt)`, constant over a grid of `space_nodes`.
    DiracCos { fiber_nodes: usize, space_nodes: usize },
    /// Scalar fields `s`, `t` over a common space.
    Commuting { s: AlgebraElement, t: AlgebraElement },
    /// Hermitian matrices per node, given row by row. The commutator is the
    /// matrix commutator.
    Explicit {
        space: BaseSpace,
        s: Vec<Vec<Vec<C64>>>,
        t: Vec<Vec<Vec<C64>>>,
    },
}

/// Square matrix from its rows.
pub fn matrix_from_rows(rows: &[Vec<C64>]) -> Result<CMat> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::input("matrix rows must form a nonempty square array"));
    }
    if rows.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::input("matrix has non-finite entries"));
    }
    Ok(CMat::from_fn(n, n, |i, j| rows[i][j]))
}

fn matrices_per_node(space: &BaseSpace, mats: &[Vec<Vec<C64>>]) -> Result<Vec<CMat>> {
    if mats.len() != space.len() {
        return Err(Error::DimensionMismatch {
            expected: space.len(),
            found: mats.len(),
        });
    }
    let out: Vec<CMat> = mats.iter().map(|m| matrix_from_rows(m)).collect::<Result<_>>()?;
    if out.iter().any(|m| m.nrows() != out[0].nrows()) {
        return Err(Error::input("all nodes need matrices of one size"));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SumModel {
    pub spec: SumModelSpec,
    pub space: BaseSpace,
    pub s: Vec<CMat>,
    pub t: Vec<CMat>,
    pub commutator: Vec<CMat>,
    /// Leading coordinates on which the truncation acts exactly; samples are
    /// drawn there.
    pub sample_dim: usize,
}

fn hermite_ladder(n: usize) -> CMat {
    let mut a = CMat::zeros(n, n);
    for k in 0..n.saturating_sub(1) {
        a[(k, k + 1)] = C64::from(((k + 1) as f64).sqrt());
    }
    a
}

/// `(p, x)` on the first `n` Hermite functions.
pub fn hermite_pair(n: usize) -> (CMat, CMat) {
    let a = hermite_ladder(n);
    let ad = a.adjoint();
    let r2 = C64::from(2f64.sqrt());
    let p = (&a - &ad) * (-I / r2);
    let x = (&a + &ad) / r2;
    (p, x)
}

/// `AB - BA` for tridiagonal `A`, `B`.
fn tridiagonal_commutator(a: &CMat, b: &CMat) -> CMat {
    let n = a.nrows();
    let band = |i: usize| i.saturating_sub(1)..(i + 2).min(n);
    CMat::from_fn(n, n, |i, j| {
        if i.abs_diff(j) > 2 {
            return C64::from(0.0);
        }
        band(i)
            .filter(|k| k.abs_diff(j) <= 1)
            .map(|k| a[(i, k)] * b[(k, j)] - b[(i, k)] * a[(k, j)])
            .sum()
    })
}

fn scalar(v: C64) -> CMat {
    CMat::from_element(1, 1, v)
}

impl SumModelSpec {
    pub fn build(&self) -> Result<SumModel> {
        match self {
            SumModelSpec::Hermite { dim } => {
                if *dim < 2 {
                    return Err(Error::input("Hermite truncation needs dim ≥ 2"));
                }
                let (p, x) = hermite_pair(*dim);
                let (pb, xb) = hermite_pair(dim + 1);
                let k = tridiagonal_commutator(&pb, &xb).view((0, 0), (*dim, *dim)).into_owned();
                Ok(SumModel {
                    spec: self.clone(),
                    space: BaseSpace::finite(1)?,
                    s: vec![p],
                    t: vec![x],
                    commutator: vec![k],
                    sample_dim: (dim / 4).max(1),
                })
            }
            SumModelSpec::Fourier { modes, coefficients } => {
                let m = *modes as i64;
                let n = 2 * modes + 1;
                let coeff = |j: i64| -> C64 {
                    let mut c = C64::from(0.0);
                    for &(k, v) in coefficients {
                        if k == j {
                            c += v;
                        }
                        if k == -j && j != 0 {
                            c += v.conj();
                        }
                        if k == 0 && j == 0 {
                            c = C64::from(v.re);
                        }
                    }
                    c
                };
                if coefficients.iter().any(|(k, _)| *k < 0) {
                    return Err(Error::input("give Fourier coefficients for j ≥ 0 only"));
                }
                let s = CMat::from_fn(n, n, |i, j| {
                    if i == j {
                        C64::from(2.0 * std::f64::consts::PI * (i as i64 - m) as f64)
                    } else {
                        C64::from(0.0)
                    }
                });
                let t = CMat::from_fn(n, n, |i, j| coeff(i as i64 - j as i64));
                let k = &s * &t - &t * &s;
                Ok(SumModel {
                    spec: self.clone(),
                    space: BaseSpace::finite(1)?,
                    s: vec![s],
                    t: vec![t],
                    commutator: vec![k],
                    sample_dim: n,
                })
            }
            SumModelSpec::DiracCos { fiber_nodes, space_nodes } => {
                let pair = build_dirac_interval(*fiber_nodes, "box")?;
                let d1 = build_extension(&pair.data, C64::from(1.0))?;
                let s = d1.fiber_at(0)?.to_relation().operator_form()?;
                let s = (&s + s.adjoint()) * C64::from(0.5);
                let g = pair.data.grid;
                let t = CMat::from_diagonal(&CVec::from_fn(g.cells(), |j, _| {
                    C64::from((2.0 * std::f64::consts::PI * g.midpoint(j)).cos())
                }));
                let k = &s * &t - &t * &s;
                let space = BaseSpace::unit_grid(*space_nodes)?;
                let n = space.len();
                Ok(SumModel {
                    spec: self.clone(),
                    space,
                    s: vec![s; n],
                    t: vec![t; n],
                    commutator: vec![k; n],
                    sample_dim: g.cells(),
                })
            }
            SumModelSpec::Explicit { space, s, t } => {
                space.validate()?;
                let s = matrices_per_node(space, s)?;
                let t = matrices_per_node(space, t)?;
                if s[0].nrows() != t[0].nrows() {
                    return Err(Error::input("S and T act on fibers of different size"));
                }
                let commutator = s.iter().zip(&t).map(|(a, b)| a * b - b * a).collect();
                Ok(SumModel {
                    spec: self.clone(),
                    space: space.clone(),
                    sample_dim: s[0].nrows(),
                    s,
                    t,
                    commutator,
                })
            }
            SumModelSpec::Commuting { s, t } => {
                s.space.check_same(&t.space)?;
                Ok(SumModel {
                    spec: self.clone(),
                    space: s.space.clone(),
                    s: s.values.iter().map(|v| scalar(*v)).collect(),
                    t: t.values.iter().map(|v| scalar(*v)).collect(),
                    commutator: vec![CMat::zeros(1, 1); s.len()],
                    sample_dim: 1,
                })
            }
        }
    }

    /// The same model at (roughly) twice the truncation, keeping its parity.
    pub fn doubled(&self) -> Option<SumModelSpec> {
        match self {
            SumModelSpec::Hermite { dim } => Some(SumModelSpec::Hermite { dim: 2 * dim - dim % 2 }),
            SumModelSpec::Fourier { modes, coefficients } => Some(SumModelSpec::Fourier {
                modes: 2 * modes,
                coefficients: coefficients.clone(),
            }),
            SumModelSpec::DiracCos { fiber_nodes, space_nodes } => Some(SumModelSpec::DiracCos {
                fiber_nodes: 2 * fiber_nodes - fiber_nodes % 2,
                space_nodes: *space_nodes,
            }),
            SumModelSpec::Commuting { .. } | SumModelSpec::Explicit { .. } => None,
        }
    }
}

impl SumModel {
    pub fn fiber_dim(&self) -> usize {
        self.s[0].nrows()
    }

    pub fn s_operator(&self) -> Result<OperatorRep> {
        OperatorRep::diagonal(&self.space, self.s.clone())
    }

    pub fn t_operator(&self) -> Result<OperatorRep> {
        OperatorRep::diagonal(&self.space, self.t.clone())
    }

    /// `(S - iμ)^{-1}` at node `p`.
    pub fn resolvent(&self, p: usize, mu: f64) -> Result<CMat> {
        let n = self.fiber_dim();
        linalg::inverse(&(&self.s[p] - CMat::identity(n, n) * (I * mu)))
            .ok_or_else(|| Error::Singular(format!("S - i{mu} is not invertible")))
    }

    /// `X_μ = [S, T](S - iμ)^{-1}` at node `p`.
    pub fn x_mu(&self, p: usize, mu: f64) -> Result<CMat> {
        Ok(&self.commutator[p] * self.resolvent(p, mu)?)
    }

    /// A larger truncation of the same model whose resolvents stand in for
    /// the untruncated ones on low modes. Models that are exact return
    /// themselves.
    pub fn reference(&self) -> Result<SumModel> {
        match &self.spec {
            SumModelSpec::Hermite { dim } => SumModelSpec::Hermite { dim: 4 * dim }.build(),
            _ => Ok(self.clone()),
        }
    }

    /// Random vectors supported on the exactly represented coordinates, one
    /// per node, with the first few coordinate vectors included.
    pub fn samples<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Vec<CVec>> {
        let n = self.fiber_dim();
        let m = self.sample_dim.min(n);
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            let per_node = (0..self.space.len())
                .map(|_| {
                    let mut v = CVec::zeros(n);
                    if k < m.min(count / 2) {
                        v[k] = C64::from(1.0);
                    } else {
                        v.rows_mut(0, m).copy_from(&linalg::random_cvec(rng, m));
                    }
                    v
                })
                .collect();
            out.push(per_node);
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct XNorm {
    pub mu: f64,
    /// `max_p ‖X_μ(p)‖`.
    pub norm: f64,
    /// `max_p ‖[S, T](p)‖ / dist(iμ, σ(S(p)))`.
    pub resolvent_bound: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MuResidual {
    pub mu: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SumProblem {
    #[serde(skip)]
    pub model: SumModel,
    pub spec: SumModelSpec,
    pub fiber_dim: usize,
    pub mu_grid: Vec<f64>,
    pub x_norms: Vec<XNorm>,
    pub x_minus_one: f64,
    /// Constant of the commutator estimate: `(1 + ‖X_{-1}‖²)/2`, or 0 when
    /// the commutator vanishes.
    pub c: f64,
    /// Largest relative defect of `⟨X_μ ξ, η⟩ = ⟨ξ, -(S + iμ)^{-1}[S,T] η⟩`.
    pub adjoint_formula_residual: f64,
    /// Per `μ`, the largest relative defect of
    /// `T(S - iμ)^{-1}ξ = (S - iμ)^{-1}Tξ + (S - iμ)^{-1}X_μ ξ`, evaluated
    /// on the reference truncation.
    pub commutation_residuals: Vec<MuResidual>,
    pub core_is_dense: bool,
}

fn hermitian_check(m: &CMat, what: &str) -> Result<()> {
    let r = linalg::hermitian_residual(m) / (1.0 + m.norm());
    if r > 1e-10 {
        return Err(Error::Hypothesis(format!("{what} is not selfadjoint ({r:.3e})")));
    }
    Ok(())
}

/// Validates the assumptions on `S`, `T` and the core, and materializes
/// `X_μ` on the grid of `μ`.
pub fn build_sum_problem<R: Rng + ?Sized>(model: SumModel, mu_grid: &[f64], core: Option<Submodule>, rng: &mut R) -> Result<SumProblem> {
    if mu_grid.is_empty() || mu_grid.iter().any(|m| *m == 0.0 || !m.is_finite()) {
        return Err(Error::input("μ grid must be nonempty, finite and avoid 0"));
    }
    for p in 0..model.space.len() {
        hermitian_check(&model.s[p], "S")?;
        hermitian_check(&model.t[p], "T")?;
    }
    let d = model.fiber_dim();
    let t_op = model.t_operator()?;
    let core = match core {
        Some(c) => c,
        None => Submodule::new((0..d).map(|k| ModuleVector::unit(&model.space, d, k)).collect())?,
    };
    let states: Vec<State> = (0..model.space.len()).map(State::pure).collect();
    let core_is_dense = check_core(&t_op, &core, &states, &CoreTargets::Domain, CORE_TOL)?
        .iter()
        .all(|r| r.is_core);
    if !core_is_dense {
        return Err(Error::Hypothesis("the given submodule is not a core for T".into()));
    }

    let mut grid: Vec<f64> = mu_grid.to_vec();
    if !grid.contains(&-1.0) {
        grid.push(-1.0);
    }
    let mut x_norms = Vec::with_capacity(grid.len());
    for &mu in &grid {
        let (mut norm, mut bound) = (0.0f64, 0.0f64);
        for p in 0..model.space.len() {
            norm = norm.max(linalg::op_norm(&model.x_mu(p, mu)?));
            let dist = linalg::hermitian_eigen(&model.s[p])
                .0
                .iter()
                .map(|s| (s * s + mu * mu).sqrt())
                .fold(f64::INFINITY, f64::min);
            bound = bound.max(linalg::op_norm(&model.commutator[p]) / dist);
        }
        if !norm.is_finite() {
            return Err(Error::Hypothesis(format!("X_μ is unbounded at μ = {mu}")));
        }
        x_norms.push(XNorm {
            mu,
            norm,
            resolvent_bound: bound,
        });
    }
    let x_minus_one = x_norms.iter().find(|x| x.mu == -1.0).map(|x| x.norm).unwrap_or(0.0);
    let c = if x_minus_one > 0.0 { (1.0 + x_minus_one * x_minus_one) / 2.0 } else { 0.0 };

    let samples = model.samples(20, rng);
    let mut adj = 0.0f64;
    for &mu in &grid {
        for p in 0..model.space.len() {
            let r = model.resolvent(p, mu)?;
            let rplus = model.resolvent(p, -mu)?;
            let x = &model.commutator[p] * &r;
            let xs = -(&rplus * &model.commutator[p]);
            for pair in samples.windows(2) {
                let (xi, eta) = (&pair[0][p], &pair[1][p]);
                let lhs = (&x * xi).dotc(eta);
                let rhs = xi.dotc(&(&xs * eta));
                adj = adj.max((lhs - rhs).norm() / (xi.norm() * eta.norm()));
            }
        }
    }
    let commutation_residuals = commutation_residuals(&model, &grid, &samples)?;
    Ok(SumProblem {
        spec: model.spec.clone(),
        fiber_dim: d,
        mu_grid: grid,
        x_norms,
        x_minus_one,
        c,
        adjoint_formula_residual: adj,
        commutation_residuals,
        core_is_dense,
        model,
    })
}

/// The commutation identity behind `(S - iμ)^{-1}` preserving the joint
/// domain. A truncation only satisfies it away from its top modes, so the
/// resolvent is taken on the reference truncation and the samples are
/// padded with zeros.
fn commutation_residuals(model: &SumModel, grid: &[f64], samples: &[Vec<CVec>]) -> Result<Vec<MuResidual>> {
    let reference = model.reference()?;
    let n = reference.fiber_dim();
    let d = model.fiber_dim();
    grid.iter()
        .map(|&mu| {
            let mut worst = 0.0f64;
            for p in 0..reference.space.len() {
                let lu = (&reference.s[p] - CMat::identity(n, n) * (I * mu)).lu();
                let solve = |v: &CVec| lu.solve(v).ok_or_else(|| Error::Singular(format!("S - i{mu} is not invertible")));
                for xi in samples {
                    let mut x = CVec::zeros(n);
                    x.rows_mut(0, d).copy_from(&xi[p]);
                    let rx = solve(&x)?;
                    let left = &reference.t[p] * &rx;
                    let right = solve(&(&reference.t[p] * &x))? + solve(&(&reference.commutator[p] * &rx))?;
                    worst = worst.max((left - right).norm() / x.norm());
                }
            }
            Ok(MuResidual { mu, residual: worst })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RnRow {
    pub n: f64,
    /// `max ‖R_n ξ‖` over samples.
    pub rn_xi: f64,
    pub rn_adjoint_xi: f64,
    pub operator_norm: f64,
    /// `‖X_{-1}‖ · ‖(S + i)(S - in)^{-1}‖`.
    pub envelope: f64,
    /// Difference between the defining product and its factorization.
    pub factorization_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RnReport {
    pub rows: Vec<RnRow>,
    pub decreasing: bool,
    /// Last `‖R_n ξ‖` relative to the first.
    pub final_ratio: f64,
}

/// `R_n = (i/n)(iS/n + 1)^{-1}[S,T](iS/n + 1)^{-1}` on samples.
pub fn strong_vanishing_rn(problem: &SumProblem, samples: &[Vec<CVec>], n_list: &[f64]) -> Result<RnReport> {
    let model = &problem.model;
    let d = model.fiber_dim();
    let id = CMat::identity(d, d);
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        if n <= 0.0 {
            return Err(Error::input("n must be positive"));
        }
        let mut row = RnRow {
            n,
            rn_xi: 0.0,
            rn_adjoint_xi: 0.0,
            operator_norm: 0.0,
            envelope: 0.0,
            factorization_residual: 0.0,
        };
        for p in 0..model.space.len() {
            let s = &model.s[p];
            let damp = linalg::inverse(&(s * (I / n) + &id)).ok_or_else(|| Error::Singular("iS/n + 1".into()))?;
            let rn = &damp * &model.commutator[p] * &damp * (I / n);
            let tail = (s + &id * I) * model.resolvent(p, n)?;
            let fact = &damp * model.x_mu(p, -1.0)? * &tail;
            row.factorization_residual = row.factorization_residual.max((&rn - &fact).norm() / (1.0 + rn.norm()));
            row.operator_norm = row.operator_norm.max(linalg::op_norm(&rn));
            row.envelope = row.envelope.max(problem.x_minus_one * linalg::op_norm(&tail));
            let rna = rn.adjoint();
            for xi in samples {
                row.rn_xi = row.rn_xi.max((&rn * &xi[p]).norm() / xi[p].norm());
                row.rn_adjoint_xi = row.rn_adjoint_xi.max((&rna * &xi[p]).norm() / xi[p].norm());
            }
        }
        rows.push(row);
    }
    let decreasing = rows.windows(2).all(|w| w[1].rn_xi <= w[0].rn_xi * (1.0 + 1e-12) + 1e-300);
    let final_ratio = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) if a.rn_xi > 0.0 => b.rn_xi / a.rn_xi,
        _ => 0.0,
    };
    Ok(RnReport {
        rows,
        decreasing,
        final_ratio,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonWitness {
    pub node: usize,
    pub sample: usize,
    pub inequality: String,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub c: f64,
    pub commutator_margin: f64,
    pub sum_margin: f64,
    pub holds: bool,
    pub witness: Option<ComparisonWitness>,
}

/// `±i⟨[S,T]ξ, ξ⟩ ≤ ½⟨Sξ, Sξ⟩ + C⟨ξ, ξ⟩` and
/// `⟨(S ± iT)ξ, (S ± iT)ξ⟩ ≥ ½⟨Sξ, Sξ⟩ + ⟨Tξ, Tξ⟩ - C⟨ξ, ξ⟩` nodewise.
pub fn graph_comparison_check(problem: &SumProblem, c: f64, samples: &[Vec<CVec>]) -> Result<ComparisonReport> {
    let model = &problem.model;
    let mut commutator_margin = f64::INFINITY;
    let mut sum_margin = f64::INFINITY;
    let mut witness = None;
    for (k, xi) in samples.iter().enumerate() {
        for p in 0..model.space.len() {
            let x = &xi[p];
            let sx = &model.s[p] * x;
            let tx = &model.t[p] * x;
            let kx = &model.commutator[p] * x;
            let (ss, tt, xx) = (sx.norm_squared(), tx.norm_squared(), x.norm_squared());
            let scale = 1.0 + ss + tt + xx;
            let ik = (I * x.dotc(&kx)).re;
            for sign in [1.0, -1.0] {
                let m1 = (0.5 * ss + c * xx - sign * ik) / scale;
                let plus = &sx + &tx * (I * sign);
                let m2 = (plus.norm_squared() - (0.5 * ss + tt - c * xx)) / scale;
                commutator_margin = commutator_margin.min(m1);
                sum_margin = sum_margin.min(m2);
                if witness.is_none() {
                    if m1 < -1e-10 {
                        witness = Some(ComparisonWitness {
                            node: p,
                            sample: k,
                            inequality: format!("{}i⟨[S,T]ξ,ξ⟩ ≤ ½⟨Sξ,Sξ⟩ + C⟨ξ,ξ⟩", if sign > 0.0 { "+" } else { "-" }),
                            margin: m1,
                        });
                    } else if m2 < -1e-10 {
                        witness = Some(ComparisonWitness {
                            node: p,
                            sample: k,
                            inequality: format!("‖(S {} iT)ξ‖² ≥ ½‖Sξ‖² + ‖Tξ‖² - C‖ξ‖²", if sign > 0.0 { "+" } else { "-" }),
                            margin: m2,
                        });
                    }
                }
            }
        }
    }
    Ok(ComparisonReport {
        c,
        commutator_margin,
        sum_margin,
        holds: witness.is_none(),
        witness,
    })
}

/// `D = [[0, S - iT], [S + iT, 0]]` on `E ⊕ E`.
pub fn build_sum_operator(model: &SumModel) -> Result<OperatorRep> {
    let d = model.fiber_dim();
    let mats = (0..model.space.len())
        .map(|p| {
            let mut m = CMat::zeros(2 * d, 2 * d);
            m.view_mut((0, d), (d, d)).copy_from(&(&model.s[p] - &model.t[p] * I));
            m.view_mut((d, 0), (d, d)).copy_from(&(&model.s[p] + &model.t[p] * I));
            m
        })
        .collect();
    OperatorRep::diagonal(&model.space, mats)
}

#[derive(Debug, Clone, Serialize)]
pub struct SumVerdict {
    /// Largest `‖D^ω - [[0, S^ω - iT^ω], [S^ω + iT^ω, 0]]‖` over states.
    pub localization_residual: f64,
    /// Whether `dim dom D^ω = 2 dim(dom S^ω ∩ dom T^ω)` at every state.
    pub domain_dims_agree: bool,
    pub local: RegularityVerdict,
    pub selfadjoint_regular: bool,
    /// Spectrum of `D` at the first node.
    pub spectrum: Vec<f64>,
}

fn intersection_dim(a: &Relation, b: &Relation) -> usize {
    if a.is_operator() && b.is_operator() {
        return a.hilbert_dim();
    }
    let tol = 1e-10;
    linalg::rank(&a.embed, tol) + linalg::rank(&b.embed, tol) - linalg::rank(&linalg::hstack(&a.embed, &b.embed), tol)
}

/// Localizes `D` against `S` and `T` at every state and decides
/// selfadjointness and regularity of `D` from its localizations.
pub fn sum_selfadjoint_regular_check(model: &SumModel, states: &[State], tau: f64) -> Result<SumVerdict> {
    let d = model.fiber_dim();
    let dop = build_sum_operator(model)?;
    let s_op = model.s_operator()?;
    let t_op = model.t_operator()?;
    let mut residual = 0.0f64;
    let mut dims_ok = true;
    for state in states {
        let loc = localize_module(&model.space, d, state)?;
        let loc2 = localize_module(&model.space, 2 * d, state)?;
        let dl = localize_operator(&dop, &loc2)?;
        let sl = localize_operator(&s_op, &loc)?.fiber.to_relation();
        let tl = localize_operator(&t_op, &loc)?.fiber.to_relation();
        let dm = dl.matrix()?;
        let sm = sl.operator_form()?;
        let tm = tl.operator_form()?;
        let m = loc.dim;
        let mut block = CMat::zeros(2 * m, 2 * m);
        block.view_mut((0, m), (m, m)).copy_from(&(&sm - &tm * I));
        block.view_mut((m, 0), (m, m)).copy_from(&(&sm + &tm * I));
        // Node-major ordering of (E ⊕ E)^ω against the block ordering.
        let supp = loc.nodes.len();
        let perm: Vec<usize> = (0..supp)
            .flat_map(|k| (0..d).map(move |j| k * d + j).chain((0..d).map(move |j| m + k * d + j)))
            .collect();
        let mut reordered = CMat::zeros(2 * m, 2 * m);
        for (i, &pi) in perm.iter().enumerate() {
            for (j, &pj) in perm.iter().enumerate() {
                reordered[(pi, pj)] = dm[(i, j)];
            }
        }
        residual = residual.max((reordered - block).norm());
        dims_ok &= dl.fiber.to_relation().domain_dim() == 2 * intersection_dim(&sl, &tl);
    }
    let local = local_global_check(&dop, states, tau)?;
    let d0 = dop.fiber_at(0)?.to_relation().operator_form()?;
    let mut spectrum: Vec<f64> = ((&d0 + d0.adjoint()) * C64::from(0.5)).symmetric_eigenvalues().iter().copied().collect();
    spectrum.sort_by(f64::total_cmp);
    Ok(SumVerdict {
        localization_residual: residual,
        domain_dims_agree: dims_ok,
        selfadjoint_regular: local.selfadjoint_regular && local.regular,
        local,
        spectrum,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SumReport {
    pub problem: SumProblem,
    pub rn: RnReport,
    pub comparison: ComparisonReport,
    pub verdict: SumVerdict,
    /// Verdict of the doubled truncation, when the model has one.
    pub doubled_selfadjoint_regular: Option<bool>,
    pub stable_under_doubling: bool,
}

/// The full pipeline: assumptions, `R_n`, the comparison inequalities, the
/// verdict on `D`, and the same verdict at the doubled truncation.
pub fn verify_sum<R: Rng + ?Sized>(
    spec: &SumModelSpec,
    core: Option<Submodule>,
    mu_grid: &[f64],
    n_list: &[f64],
    states: Option<Vec<State>>,
    tau: f64,
    rng: &mut R,
) -> Result<SumReport> {
    let model = spec.build()?;
    let states = states.unwrap_or_else(|| (0..model.space.len()).map(State::pure).collect());
    let problem = build_sum_problem(model, mu_grid, core, rng)?;
    let samples = problem.model.samples(40, rng);
    let verdict = sum_selfadjoint_regular_check(&problem.model, &states, tau)?;
    let rn = strong_vanishing_rn(&problem, &samples, n_list)?;
    let comparison = graph_comparison_check(&problem, problem.c, &samples)?;
    let doubled = match spec.doubled() {
        Some(s) => {
            let model = s.build()?;
            let local = local_global_check(&build_sum_operator(&model)?, &states, tau)?;
            Some(local.selfadjoint_regular && local.regular)
        }
        None => None,
    };
    Ok(SumReport {
        stable_under_doubling: doubled.is_none_or(|v| v == verdict.selfadjoint_regular),
        doubled_selfadjoint_regular: doubled,
        problem,
        rn,
        comparison,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn banded_commutator_matches_dense() {
        let (p, x) = hermite_pair(9);
        assert!((tridiagonal_commutator(&p, &x) - (&p * &x - &x * &p)).norm() < 1e-14);
    }

    #[test]
    fn hermite_commutator_is_exact() {
        let m = SumModelSpec::Hermite { dim: 30 }.build().unwrap();
        let k = &m.commutator[0];
        assert!((k + CMat::identity(30, 30) * I).norm() < 1e-12);
    }

    #[test]
    fn x_mu_norm_equals_inverse_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dim in [40, 41] {
            let m = SumModelSpec::Hermite { dim }.build().unwrap();
            let p = build_sum_problem(m, &[1.0, 2.0, -0.5], None, &mut rng).unwrap();
            for x in &p.x_norms {
                assert!((x.norm - x.resolvent_bound).abs() < 1e-10);
                if dim % 2 == 1 {
                    assert!((x.norm - 1.0 / x.mu.abs()).abs() < 1e-10);
                }
            }
            assert!(p.adjoint_formula_residual < 1e-10);
        }
    }

    #[test]
    fn commuting_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let space = BaseSpace::finite(3).unwrap();
        let s = AlgebraElement::from_real_fn(&space, |x| x - 1.0);
        let t = AlgebraElement::from_real_fn(&space, |x| 2.0 * x);
        let spec = SumModelSpec::Commuting { s: s.clone(), t: t.clone() };
        let r = verify_sum(&spec, None, &[1.0], &[1.0, 10.0], None, 1e-8, &mut rng).unwrap();
        assert_eq!(r.problem.c, 0.0);
        assert!(r.problem.x_norms.iter().all(|x| x.norm == 0.0));
        assert!(r.rn.rows.iter().all(|row| row.rn_xi == 0.0));
        assert!(r.comparison.holds && r.verdict.selfadjoint_regular);
        let expect = (s.values[0] + I * t.values[0]).norm();
        assert!(r.verdict.spectrum.iter().all(|e| (e.abs() - expect).abs() < 1e-12));
    }

    #[test]
    fn wrong_constant_is_caught() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = SumModelSpec::Hermite { dim: 40 }.build().unwrap();
        let p = build_sum_problem(m, &[1.0], None, &mut rng).unwrap();
        let samples = p.model.samples(20, &mut rng);
        assert!(graph_comparison_check(&p, p.c, &samples).unwrap().holds);
        let r = graph_comparison_check(&p, 0.0, &samples).unwrap();
        assert!(!r.holds && r.witness.is_some());
    }

    #[test]
    fn fourier_pair_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = SumModelSpec::Fourier {
            modes: 16,
            coefficients: vec![(1, C64::from(0.5))],
        };
        let p = build_sum_problem(spec.build().unwrap(), &[1.0, 4.0], None, &mut rng).unwrap();
        let mprime = 2.0 * std::f64::consts::PI;
        for x in &p.x_norms {
            assert!(x.norm <= mprime / x.mu.abs() + 1e-9, "{x:?}");
        }
        assert!(p.commutation_residuals.iter().all(|r| r.residual < 1e-10));
    }

    #[test]
    fn dirac_cos_pair_is_selfadjoint_regular() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = SumModelSpec::DiracCos { fiber_nodes: 24, space_nodes: 5 };
        let r = verify_sum(&spec, None, &[1.0, 2.0], &[1.0, 10.0, 100.0], None, 1e-7, &mut rng).unwrap();
        assert!(r.verdict.selfadjoint_regular && r.stable_under_doubling);
        assert!(r.verdict.localization_residual < 1e-8 && r.verdict.domain_dims_agree);
    }
}
