//! Operators on a single fiber, modeled as linear relations.
//!
//! A relation is described by a parameter space `C^k` and two maps
//! `J, A : C^k → H`; its graph is `{(Jc, Ac)}`. Operators with domain all of
//! `H` use `J = I`. Relations whose graph contains pairs `(0, y)` with
//! `y ≠ 0` are allowed; they appear as "eigenvalues at infinity".

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64, I};

use super::dirac::{DeficiencyData, DiracGrid};

const GRAPH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DefectReport {
    pub n_plus: usize,
    pub n_minus: usize,
    /// Distance from deficiency for each sign: 0 means a deficiency vector
    /// was found, values near 1 mean `T ± i` is well conditioned.
    pub margin_plus: f64,
    pub margin_minus: f64,
    pub tau: f64,
}

impl DefectReport {
    pub fn indices(&self) -> (usize, usize) {
        (self.n_plus, self.n_minus)
    }

    pub fn is_selfadjoint(&self) -> bool {
        self.n_plus == 0 && self.n_minus == 0
    }

    pub fn margin(&self) -> f64 {
        self.margin_plus.min(self.margin_minus)
    }

    fn combine(reports: &[DefectReport], tau: f64) -> DefectReport {
        DefectReport {
            n_plus: reports.iter().map(|r| r.n_plus).sum(),
            n_minus: reports.iter().map(|r| r.n_minus).sum(),
            margin_plus: reports.iter().map(|r| r.margin_plus).fold(f64::INFINITY, f64::min),
            margin_minus: reports.iter().map(|r| r.margin_minus).fold(f64::INFINITY, f64::min),
            tau,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RangeReport {
    /// Codimension of `ran(T + iμ)` and `ran(T - iμ)`.
    pub codim_plus: usize,
    pub codim_minus: usize,
    pub margin_plus: f64,
    pub margin_minus: f64,
}

impl RangeReport {
    pub fn surjective(&self) -> bool {
        self.codim_plus == 0 && self.codim_minus == 0
    }
}

/// Graph gap of two everywhere defined operators:
/// `‖(I + AA*)^{-1/2} (B - A) (I + B*B)^{-1/2}‖`.
fn operator_gap(a: &CMat, b: &CMat) -> f64 {
    if a == b {
        return 0.0;
    }
    let n = a.nrows();
    let id = CMat::identity(n, n);
    let left = (&id + a * a.adjoint()).cholesky().expect("I + AA* is positive definite");
    let right = (&id + b.adjoint() * b).cholesky().expect("I + B*B is positive definite");
    let m = left.l().solve_lower_triangular(&(b - a)).expect("invertible factor");
    let m = right
        .l()
        .solve_lower_triangular(&m.adjoint())
        .expect("invertible factor");
    let top = (m.adjoint() * &m).symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max);
    top.max(0.0).sqrt().min(1.0)
}

/// Dense linear relation.
#[derive(Debug, Clone)]
pub struct Relation {
    pub embed: CMat,
    pub action: CMat,
}

impl Relation {
    pub fn new(embed: CMat, action: CMat) -> Result<Self> {
        if embed.shape() != action.shape() {
            return Err(Error::input(format!(
                "embedding {:?} and action {:?} shapes differ",
                embed.shape(),
                action.shape()
            )));
        }
        Ok(Self { embed, action })
    }

    /// Everywhere defined operator given by a square matrix.
    pub fn operator(m: CMat) -> Self {
        let n = m.nrows();
        assert_eq!(n, m.ncols(), "operator matrix must be square");
        Self {
            embed: CMat::identity(n, n),
            action: m,
        }
    }

    pub fn hilbert_dim(&self) -> usize {
        self.embed.nrows()
    }

    pub fn param_dim(&self) -> usize {
        self.embed.ncols()
    }

    /// Whether the relation is stored as the graph of an everywhere defined
    /// operator, `J = I`.
    pub fn is_operator(&self) -> bool {
        let n = self.hilbert_dim();
        self.param_dim() == n
            && self
                .embed
                .iter()
                .enumerate()
                .all(|(k, z)| *z == if k % (n + 1) == 0 { C64::from(1.0) } else { C64::from(0.0) })
    }

    /// Dimension of the domain.
    pub fn domain_dim(&self) -> usize {
        if self.is_operator() {
            self.hilbert_dim()
        } else {
            linalg::rank(&self.embed, GRAPH_TOL)
        }
    }

    pub fn gram(&self) -> CMat {
        self.embed.adjoint() * &self.embed + self.action.adjoint() * &self.action
    }

    /// Orthonormal basis of the graph, stacked as `[x; y]`.
    pub fn graph_basis(&self) -> CMat {
        if self.is_operator() {
            let r = self.normalized();
            return linalg::vstack(&r.embed, &r.action);
        }
        linalg::orth(&linalg::vstack(&self.embed, &self.action), GRAPH_TOL)
    }

    /// Same relation with an orthonormal graph parametrization (`G = I`).
    pub fn normalized(&self) -> Relation {
        if self.is_operator() {
            // G = I + A*A ≥ I, so its Cholesky factor is safely invertible.
            let n = self.hilbert_dim();
            if let Some(ch) = self.gram().cholesky() {
                if let Some(linv) = ch.l().solve_lower_triangular(&CMat::identity(n, n)) {
                    let embed = linv.adjoint();
                    return Relation {
                        action: &self.action * &embed,
                        embed,
                    };
                }
            }
        }
        let q = self.graph_basis();
        let n = self.hilbert_dim();
        Relation {
            embed: q.rows(0, n).into_owned(),
            action: q.rows(n, n).into_owned(),
        }
    }

    /// `‖J*A - A*J‖` on an orthonormal graph basis.
    pub fn symmetry_residual(&self) -> f64 {
        if self.is_operator() && self.action == self.action.adjoint() {
            return 0.0;
        }
        let r = self.normalized();
        (r.embed.adjoint() * &r.action - r.action.adjoint() * &r.embed).norm()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.symmetry_residual() <= tol
    }

    /// `T* = {(u, v) : A*u = J*v}`.
    pub fn adjoint(&self) -> Relation {
        if self.is_operator() {
            return Relation::operator(self.action.adjoint());
        }
        let n = self.hilbert_dim();
        let m = linalg::hstack(&self.action.adjoint(), &(-self.embed.adjoint()));
        let basis = linalg::null_space(&m, GRAPH_TOL);
        Relation {
            embed: basis.rows(0, n).into_owned(),
            action: basis.rows(n, n).into_owned(),
        }
    }

    /// Gap between the graphs (spectral norm of the projector difference).
    /// For graphs of equal dimension this is `‖(I - P)Q‖`; otherwise it is 1.
    pub fn distance(&self, other: &Relation) -> f64 {
        if self.hilbert_dim() != other.hilbert_dim() {
            return f64::INFINITY;
        }
        if self.is_operator() && other.is_operator() {
            return operator_gap(&self.action, &other.action);
        }
        let p = self.graph_basis();
        let q = other.graph_basis();
        if p.ncols() != q.ncols() {
            return 1.0;
        }
        if q.ncols() == 0 {
            return 0.0;
        }
        let m = &q - &p * (p.adjoint() * &q);
        let top = (m.adjoint() * &m).symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max);
        top.max(0.0).sqrt().min(1.0)
    }

    /// Singular values of `(A + zJ)`, padded with zeros to `dim H`. Called on
    /// an orthonormal graph parametrization.
    fn normalized_shifted_singular_values(&self, z: C64) -> Vec<f64> {
        let r = self;
        let mut s = linalg::singular_values(&(&r.action + &r.embed * z));
        s.resize(self.hilbert_dim().max(s.len()), 0.0);
        s.truncate(self.hilbert_dim());
        s
    }

    fn codim(&self, z: C64, tau: f64) -> (usize, f64) {
        let s = self.normalized_shifted_singular_values(z);
        let smax = s.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
        let count = s.iter().filter(|&&x| x <= tau * smax).count();
        let margin = s.last().copied().unwrap_or(1.0);
        (count, margin)
    }

    pub fn range_report(&self, mu: f64, tau: f64) -> RangeReport {
        let r = self.normalized();
        let (cp, mp) = r.codim(I * mu, tau);
        let (cm, mm) = r.codim(-I * mu, tau);
        RangeReport {
            codim_plus: cp,
            codim_minus: cm,
            margin_plus: mp,
            margin_minus: mm,
        }
    }

    pub fn defect(&self, tau: f64, sym_tol: f64) -> Result<DefectReport> {
        let residual = self.symmetry_residual();
        if residual > sym_tol {
            return Err(Error::NotSymmetric { residual });
        }
        let r = self.range_report(1.0, tau);
        Ok(DefectReport {
            n_plus: r.codim_plus,
            n_minus: r.codim_minus,
            margin_plus: r.margin_plus,
            margin_minus: r.margin_minus,
            tau,
        })
    }

    /// Operator matrix `A J^{-1}` when the relation is the graph of an
    /// everywhere defined operator.
    pub fn operator_form(&self) -> Result<CMat> {
        let n = self.hilbert_dim();
        if self.param_dim() != n {
            return Err(Error::Singular(format!(
                "relation has {} parameters on a {n}-dimensional space; not an everywhere defined operator",
                self.param_dim()
            )));
        }
        let s = linalg::singular_values(&self.embed);
        let (smax, smin) = (s[0], *s.last().unwrap());
        if smin <= 1e-12 * smax {
            return Err(Error::Singular(
                "relation has a multivalued part (eigenvalue at infinity); change the grid parity".into(),
            ));
        }
        let jinv = linalg::inverse(&self.embed).ok_or_else(|| Error::Singular("embedding not invertible".into()))?;
        Ok(&self.action * jinv)
    }

    /// Sorted spectrum of a selfadjoint relation.
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        let m = self.operator_form()?;
        let residual = linalg::hermitian_residual(&m);
        if residual > 1e-8 {
            return Err(Error::NotSymmetric { residual });
        }
        Ok(linalg::hermitian_eigen(&m).0)
    }

    /// `[[0, T*], [T, 0]]` with domain `dom T ⊕ dom T*`.
    pub fn hat(&self, adjoint: &Relation) -> Relation {
        let n = self.hilbert_dim();
        let (k, m) = (self.param_dim(), adjoint.param_dim());
        let embed = linalg::block_diag(&[self.embed.clone(), adjoint.embed.clone()]);
        let mut action = CMat::zeros(2 * n, k + m);
        action.view_mut((0, k), (n, m)).copy_from(&adjoint.action);
        action.view_mut((n, 0), (n, k)).copy_from(&self.action);
        Relation { embed, action }
    }

    pub fn direct_sum(parts: &[Relation]) -> Relation {
        Relation {
            embed: linalg::block_diag(&parts.iter().map(|r| r.embed.clone()).collect::<Vec<_>>()),
            action: linalg::block_diag(&parts.iter().map(|r| r.action.clone()).collect::<Vec<_>>()),
        }
    }

    /// `T + V` where `V` acts on the parameters of `T` (so `dom T ⊂ dom V`).
    pub fn plus_param_action(&self, v: &CMat) -> Result<Relation> {
        if v.shape() != self.action.shape() {
            return Err(Error::input("perturbation shape does not match the domain parametrization"));
        }
        Ok(Relation {
            embed: self.embed.clone(),
            action: &self.action + v,
        })
    }

    /// `T + B` for an everywhere defined bounded `B`.
    pub fn plus_bounded(&self, b: &CMat) -> Result<Relation> {
        self.plus_param_action(&(b * &self.embed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiracLabel {
    Min,
    Max,
    Extension { lambda: C64 },
    Custom,
}

impl DiracLabel {
    pub fn name(&self) -> String {
        match self {
            DiracLabel::Min => "D_min".into(),
            DiracLabel::Max => "D_max".into(),
            DiracLabel::Extension { lambda } => format!("D_lambda({:.6}{:+.6}i)", lambda.re, lambda.im),
            DiracLabel::Custom => "D_custom".into(),
        }
    }
}

/// Restriction of the box-scheme `D_max` by linear conditions on the
/// endpoint values `(f_0, f_N)`: row `r` imposes `r_0 f_0 + r_1 f_N = 0`.
#[derive(Debug, Clone)]
pub struct DiracFiber {
    pub data: Arc<DeficiencyData>,
    pub rows: Vec<[C64; 2]>,
    pub label: DiracLabel,
    /// Orthonormal basis of the allowed endpoint values, columns in `C^2`.
    boundary: CMat,
}

impl DiracFiber {
    pub fn new(data: Arc<DeficiencyData>, rows: Vec<[C64; 2]>, label: DiracLabel) -> Self {
        let r = CMat::from_fn(rows.len(), 2, |i, j| rows[i][j]);
        let boundary = linalg::null_space(&r, 1e-12);
        Self {
            data,
            rows,
            label,
            boundary,
        }
    }

    pub fn min(data: Arc<DeficiencyData>) -> Self {
        let (one, zero) = (C64::from(1.0), C64::from(0.0));
        Self::new(data, vec![[one, zero], [zero, one]], DiracLabel::Min)
    }

    pub fn max(data: Arc<DeficiencyData>) -> Self {
        Self::new(data, Vec::new(), DiracLabel::Max)
    }

    pub fn extension(data: Arc<DeficiencyData>, lambda: C64) -> Self {
        let row = data.extension_row(lambda);
        Self::new(data, vec![row], DiracLabel::Extension { lambda })
    }

    pub fn grid(&self) -> DiracGrid {
        self.data.grid
    }

    pub fn boundary_basis(&self) -> &CMat {
        &self.boundary
    }

    pub fn param_dim(&self) -> usize {
        self.grid().nodes - 2 + self.boundary.ncols()
    }

    /// Nodal vector for parameters `[f_1..f_{N-1}, boundary coefficients]`.
    pub fn nodal(&self, params: &CVec) -> CVec {
        let g = self.grid();
        let n = g.cells();
        let mut f = CVec::zeros(g.nodes);
        for j in 1..n {
            f[j] = params[j - 1];
        }
        for k in 0..self.boundary.ncols() {
            let ck = params[n - 1 + k];
            f[0] += self.boundary[(0, k)] * ck;
            f[n] += self.boundary[(1, k)] * ck;
        }
        f
    }

    /// Parameters of a nodal vector, if its endpoint values are allowed.
    pub fn params_of(&self, f: &CVec, tol: f64) -> Result<CVec> {
        let g = self.grid();
        let n = g.cells();
        let b = CVec::from_vec(vec![f[0], f[n]]);
        let coef = self.boundary.adjoint() * &b;
        let resid = (&b - &self.boundary * &coef).norm();
        if resid > tol * b.norm().max(1.0) {
            return Err(Error::input(format!(
                "vector violates the boundary condition of {} (residual {resid:.3e})",
                self.label.name()
            )));
        }
        let mut p = CVec::zeros(self.param_dim());
        for j in 1..n {
            p[j - 1] = f[j];
        }
        for k in 0..coef.len() {
            p[n - 1 + k] = coef[k];
        }
        Ok(p)
    }

    pub fn embed(&self, params: &CVec) -> CVec {
        self.grid().embed(&self.nodal(params))
    }

    pub fn apply(&self, params: &CVec) -> CVec {
        self.grid().act(&self.nodal(params))
    }

    pub fn to_relation(&self) -> Relation {
        let g = self.grid();
        let n = g.cells();
        let mut p = CMat::zeros(g.nodes, self.param_dim());
        for j in 1..n {
            p[(j, j - 1)] = C64::from(1.0);
        }
        for k in 0..self.boundary.ncols() {
            p[(0, n - 1 + k)] = self.boundary[(0, k)];
            p[(n, n - 1 + k)] = self.boundary[(1, k)];
        }
        Relation {
            embed: g.embed_matrix() * &p,
            action: g.action_matrix() * &p,
        }
    }

    /// Boundary form on allowed endpoint values: `max |⟨v_i, Ω v_j⟩|` with
    /// `Ω = diag(-1, 1)`. Zero iff the restriction is symmetric.
    pub fn symmetry_residual(&self) -> f64 {
        let omega = omega();
        let m = self.boundary.adjoint() * omega * &self.boundary;
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// The adjoint is again a restriction of `D_max`; its allowed endpoint
    /// values are `Ω V^⊥`.
    pub fn adjoint(&self) -> DiracFiber {
        let rows: Vec<[C64; 2]> = (0..self.boundary.ncols())
            .map(|k| {
                let v = omega() * self.boundary.column(k);
                [v[0].conj(), v[1].conj()]
            })
            .collect();
        let label = match self.label {
            DiracLabel::Min => DiracLabel::Max,
            DiracLabel::Max => DiracLabel::Min,
            l @ DiracLabel::Extension { .. } if self.symmetry_residual() < 1e-10 => l,
            _ => DiracLabel::Custom,
        };
        DiracFiber::new(self.data.clone(), rows, label)
    }

    pub fn boundary_distance(&self, other: &DiracFiber) -> f64 {
        let p = linalg::projector(&self.boundary);
        let q = linalg::projector(&other.boundary);
        linalg::op_norm(&(p - q))
    }

    /// Defect numbers through the boundary reduction: with `k` parameters,
    /// `codim ran(T ± i) = N - k + dim(ker(D_max ± i) ∩ dom T)`.
    pub fn defect(&self, sym_tol: f64) -> Result<DefectReport> {
        let residual = self.symmetry_residual();
        if residual > sym_tol {
            return Err(Error::NotSymmetric { residual });
        }
        let g = self.grid();
        let base = g.cells().saturating_sub(self.param_dim());
        let tau = self.data.tau;
        let kernel_in_domain = |phi: &CVec| -> (usize, f64) {
            let b = CVec::from_vec(vec![phi[0], phi[g.cells()]]);
            let out = &b - &self.boundary * (self.boundary.adjoint() * &b);
            let rel = out.norm() / b.norm();
            (usize::from(rel <= tau), rel)
        };
        // ker(D_max + i) is spanned by φ_-, ker(D_max - i) by φ_+.
        let (kp, mp) = kernel_in_domain(&self.data.phi_minus);
        let (km, mm) = kernel_in_domain(&self.data.phi_plus);
        Ok(DefectReport {
            n_plus: base + kp,
            n_minus: base + km,
            margin_plus: if base > 0 { 0.0 } else { mp },
            margin_minus: if base > 0 { 0.0 } else { mm },
            tau,
        })
    }
}

fn omega() -> CMat {
    CMat::from_diagonal(&CVec::from_vec(vec![C64::from(-1.0), C64::from(1.0)]))
}

/// A fiber operator: dense relation, structured Dirac restriction, or a
/// finite direct sum.
#[derive(Debug, Clone)]
pub enum FiberOp {
    Dense(Relation),
    Dirac(DiracFiber),
    Sum(Vec<FiberOp>),
}

impl FiberOp {
    pub fn operator(m: CMat) -> Self {
        FiberOp::Dense(Relation::operator(m))
    }

    /// Direct sum; a single summand is returned unchanged.
    pub fn sum(mut parts: Vec<FiberOp>) -> Self {
        if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            FiberOp::Sum(parts)
        }
    }

    pub fn hilbert_dim(&self) -> usize {
        match self {
            FiberOp::Dense(r) => r.hilbert_dim(),
            FiberOp::Dirac(d) => d.grid().cells(),
            FiberOp::Sum(parts) => parts.iter().map(|p| p.hilbert_dim()).sum(),
        }
    }

    pub fn param_dim(&self) -> usize {
        match self {
            FiberOp::Dense(r) => r.param_dim(),
            FiberOp::Dirac(d) => d.param_dim(),
            FiberOp::Sum(parts) => parts.iter().map(|p| p.param_dim()).sum(),
        }
    }

    fn split<'a>(parts: &'a [FiberOp], v: &'a CVec, by_params: bool) -> impl Iterator<Item = (&'a FiberOp, CVec)> + 'a {
        let mut off = 0;
        parts.iter().map(move |p| {
            let len = if by_params { p.param_dim() } else { p.hilbert_dim() };
            let piece = v.rows(off, len).into_owned();
            off += len;
            (p, piece)
        })
    }

    fn concat(pieces: Vec<CVec>) -> CVec {
        let total = pieces.iter().map(|p| p.len()).sum();
        let mut out = CVec::zeros(total);
        let mut off = 0;
        for p in pieces {
            out.rows_mut(off, p.len()).copy_from(&p);
            off += p.len();
        }
        out
    }

    pub fn embed(&self, params: &CVec) -> CVec {
        match self {
            FiberOp::Dense(r) => &r.embed * params,
            FiberOp::Dirac(d) => d.embed(params),
            FiberOp::Sum(parts) => Self::concat(Self::split(parts, params, true).map(|(p, c)| p.embed(&c)).collect()),
        }
    }

    pub fn apply(&self, params: &CVec) -> CVec {
        match self {
            FiberOp::Dense(r) => &r.action * params,
            FiberOp::Dirac(d) => d.apply(params),
            FiberOp::Sum(parts) => Self::concat(Self::split(parts, params, true).map(|(p, c)| p.apply(&c)).collect()),
        }
    }

    /// Parameters `c` with `Jc = x`, if `x` lies in the domain.
    pub fn lift(&self, x: &CVec, tol: f64) -> Result<CVec> {
        if x.len() != self.hilbert_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.hilbert_dim(),
                found: x.len(),
            });
        }
        match self {
            FiberOp::Sum(parts) => {
                let pieces: Result<Vec<CVec>> = Self::split(parts, x, false).map(|(p, v)| p.lift(&v, tol)).collect();
                Ok(Self::concat(pieces?))
            }
            _ => {
                let r = self.to_relation();
                let svd = r.embed.clone().svd(true, true);
                let c = svd
                    .solve(&CMat::from_column_slice(x.len(), 1, x.as_slice()), 1e-12)
                    .map_err(|e| Error::Singular(e.to_string()))?;
                let c = c.column(0).into_owned();
                let resid = (&r.embed * &c - x).norm();
                if resid > tol * x.norm().max(1.0) {
                    return Err(Error::input(format!(
                        "vector is outside the recorded domain (residual {resid:.3e})"
                    )));
                }
                Ok(c)
            }
        }
    }

    pub fn to_relation(&self) -> Relation {
        match self {
            FiberOp::Dense(r) => r.clone(),
            FiberOp::Dirac(d) => d.to_relation(),
            FiberOp::Sum(parts) => Relation::direct_sum(&parts.iter().map(|p| p.to_relation()).collect::<Vec<_>>()),
        }
    }

    pub fn adjoint(&self) -> FiberOp {
        match self {
            FiberOp::Dense(r) => FiberOp::Dense(r.adjoint()),
            FiberOp::Dirac(d) => FiberOp::Dirac(d.adjoint()),
            FiberOp::Sum(parts) => FiberOp::Sum(parts.iter().map(|p| p.adjoint()).collect()),
        }
    }

    pub fn symmetry_residual(&self) -> f64 {
        match self {
            FiberOp::Dense(r) => r.symmetry_residual(),
            FiberOp::Dirac(d) => d.symmetry_residual(),
            FiberOp::Sum(parts) => parts.iter().map(|p| p.symmetry_residual()).fold(0.0, f64::max),
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.symmetry_residual() <= tol
    }

    pub fn defect(&self, tau: f64, sym_tol: f64) -> Result<DefectReport> {
        match self {
            FiberOp::Dense(r) => r.defect(tau, sym_tol),
            FiberOp::Dirac(d) => d.defect(sym_tol),
            FiberOp::Sum(parts) => {
                let reports: Result<Vec<_>> = parts.iter().map(|p| p.defect(tau, sym_tol)).collect();
                Ok(DefectReport::combine(&reports?, tau))
            }
        }
    }

    /// Surjectivity of `T ± iμ`. Dirac fibers use the boundary reduction for
    /// `μ = 1` and the dense route otherwise.
    pub fn range_report(&self, mu: f64, tau: f64) -> RangeReport {
        match self {
            FiberOp::Dirac(d) if mu == 1.0 && d.symmetry_residual() <= 1e-10 => {
                let r = d.defect(1e-10).expect("symmetric");
                RangeReport {
                    codim_plus: r.n_plus,
                    codim_minus: r.n_minus,
                    margin_plus: r.margin_plus,
                    margin_minus: r.margin_minus,
                }
            }
            FiberOp::Dirac(d) if mu == 1.0 && d.rows.is_empty() => RangeReport {
                codim_plus: 0,
                codim_minus: 0,
                margin_plus: d.data.kernel_plus.gap.min(d.data.kernel_minus.gap),
                margin_minus: d.data.kernel_plus.gap.min(d.data.kernel_minus.gap),
            },
            FiberOp::Sum(parts) => {
                let rs: Vec<RangeReport> = parts.iter().map(|p| p.range_report(mu, tau)).collect();
                RangeReport {
                    codim_plus: rs.iter().map(|r| r.codim_plus).sum(),
                    codim_minus: rs.iter().map(|r| r.codim_minus).sum(),
                    margin_plus: rs.iter().map(|r| r.margin_plus).fold(f64::INFINITY, f64::min),
                    margin_minus: rs.iter().map(|r| r.margin_minus).fold(f64::INFINITY, f64::min),
                }
            }
            _ => self.to_relation().range_report(mu, tau),
        }
    }

    /// Gap between graphs; structured when both sides are Dirac fibers on
    /// the same grid or matching direct sums.
    pub fn distance(&self, other: &FiberOp) -> f64 {
        match (self, other) {
            (FiberOp::Dirac(a), FiberOp::Dirac(b)) if a.grid() == b.grid() => a.boundary_distance(b),
            (FiberOp::Sum(a), FiberOp::Sum(b)) if a.len() == b.len() => {
                a.iter().zip(b).map(|(x, y)| x.distance(y)).fold(0.0, f64::max)
            }
            _ => self.to_relation().distance(&other.to_relation()),
        }
    }

    pub fn same_as(&self, other: &FiberOp, tol: f64) -> bool {
        self.distance(other) <= tol
    }

    pub fn label(&self) -> String {
        match self {
            FiberOp::Dense(r) => format!("dense({}x{})", r.hilbert_dim(), r.param_dim()),
            FiberOp::Dirac(d) => d.label.name(),
            FiberOp::Sum(parts) => format!("sum of {}", parts.len()),
        }
    }
}
