//! Separating a vector from a closed convex subset of the standard module by
//! a state, and the two hat-function constructions showing what can go wrong
//! with plain convexity and with pure states.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cstar_space::{evaluate_state, tent, AlgebraElement, BaseSpace, State};
use crate::error::{Error, Result};
use crate::hilbert_module::{inner_product, submodule_distance, ModuleVector, Submodule};
use crate::linalg::{self, C64};

/// Below this distance `x0` counts as lying in the closure of `L`.
pub const SEPARATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexSet {
    Submodule(Submodule),
    ConvexHull { vertices: Vec<ModuleVector> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationProblem {
    pub set: ConvexSet,
    pub x0: ModuleVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    PureState,
    MixedState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationCertificate {
    pub state: State,
    /// Lower bound for `ω(⟨y - x0, y - x0⟩)` over `y ∈ L`.
    pub margin: f64,
    pub kind: CertificateKind,
    /// `inf ‖y - x0‖²` over `L`; for hulls an upper estimate within the
    /// solver tolerance of the margin.
    pub delta: f64,
}

impl SeparationProblem {
    pub fn validate(&self) -> Result<()> {
        let first = match &self.set {
            ConvexSet::Submodule(s) => s.generators.first(),
            ConvexSet::ConvexHull { vertices } => {
                if vertices.is_empty() {
                    return Err(Error::input("convex hull needs at least one vertex"));
                }
                vertices.first()
            }
        };
        if let Some(g) = first {
            if g.space != self.x0.space || g.fiber_dim != self.x0.fiber_dim {
                return Err(Error::input("set and x0 live in different modules"));
            }
        }
        if let ConvexSet::ConvexHull { vertices } = &self.set {
            for v in vertices {
                if v.space != self.x0.space || v.fiber_dim != self.x0.fiber_dim {
                    return Err(Error::input("hull vertices live in different modules"));
                }
            }
        }
        Ok(())
    }

    /// A random element of `L`.
    pub fn random_member<R: Rng + ?Sized>(&self, rng: &mut R) -> ModuleVector {
        let space = &self.x0.space;
        match &self.set {
            ConvexSet::Submodule(s) => {
                let mut y = ModuleVector::zero(space, self.x0.fiber_dim);
                for g in &s.generators {
                    let coeff = AlgebraElement::new(space.clone(), linalg::random_cvec(rng, space.len()).iter().copied().collect())
                        .expect("matching length");
                    y = y.add(&g.act(&coeff).expect("same space")).expect("same shape");
                }
                y
            }
            ConvexSet::ConvexHull { vertices } => {
                let lam = random_simplex_point(rng, vertices.len());
                combine(vertices, &lam)
            }
        }
    }

    /// Samples of `A = {⟨y - x0, y - x0⟩ : y ∈ L}`.
    pub fn sample_a<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<AlgebraElement> {
        (0..count)
            .map(|_| {
                let d = self.random_member(rng).sub(&self.x0).expect("same shape");
                inner_product(&d, &d).expect("same shape")
            })
            .collect()
    }
}

fn random_simplex_point<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..m).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn combine(vertices: &[ModuleVector], lam: &[f64]) -> ModuleVector {
    let mut y = ModuleVector::zero(&vertices[0].space, vertices[0].fiber_dim);
    for (v, l) in vertices.iter().zip(lam) {
        y = y.add(&v.scale(C64::from(*l))).expect("same shape");
    }
    y
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

#[derive(Debug, Clone)]
struct QpSolution {
    lambda: DVector<f64>,
    /// Frank–Wolfe lower bound for the minimum.
    lower: f64,
}

/// Minimizes `λᵀQλ - 2bᵀλ + c` over the simplex by accelerated projected
/// gradient.
fn simplex_qp(q: &DMatrix<f64>, b: &DVector<f64>, c: f64) -> QpSolution {
    let m = b.len();
    let objective = |l: &DVector<f64>| (l.transpose() * q * l)[(0, 0)] - 2.0 * b.dot(l) + c;
    let grad = |l: &DVector<f64>| 2.0 * (q * l) - 2.0 * b;
    let lip = 2.0 * q.norm().max(1e-300);
    let mut x = DVector::from_element(m, 1.0 / m as f64);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut best = (x.clone(), objective(&x));
    for it in 0..20_000 {
        let xn = project_simplex(&(&y - grad(&y) / lip));
        // Restart the momentum when it points uphill.
        if (&y - &xn).dot(&(&xn - &x)) > 0.0 {
            t = 1.0;
        }
        let tn = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = &xn + (&xn - &x) * ((t - 1.0) / tn);
        x = xn;
        t = tn;
        let v = objective(&x);
        if v < best.1 {
            best = (x.clone(), v);
        }
        if it % 50 == 0 {
            let g = grad(&best.0);
            let gap = g.dot(&best.0) - g.min();
            if gap <= 1e-11 * (1.0 + best.1.abs()) {
                break;
            }
        }
    }
    let (lambda, value) = best;
    let g = grad(&lambda);
    let lower = value - (g.dot(&lambda) - g.min()).max(0.0);
    QpSolution { lambda, lower }
}

/// Nodewise data of the hull problem: Gram matrices and cross terms.
struct HullData {
    grams: Vec<DMatrix<f64>>,
    cross: Vec<DVector<f64>>,
    x0_sq: Vec<f64>,
}

impl HullData {
    fn new(vertices: &[ModuleVector], x0: &ModuleVector) -> Self {
        let n = x0.space.len();
        let m = vertices.len();
        let mut grams = Vec::with_capacity(n);
        let mut cross = Vec::with_capacity(n);
        let mut x0_sq = Vec::with_capacity(n);
        for p in 0..n {
            let fibers: Vec<_> = vertices.iter().map(|v| v.fiber(p)).collect();
            let x = x0.fiber(p);
            grams.push(DMatrix::from_fn(m, m, |k, l| fibers[k].dotc(&fibers[l]).re));
            cross.push(DVector::from_fn(m, |k, _| fibers[k].dotc(&x).re));
            x0_sq.push(x.norm_squared());
        }
        Self { grams, cross, x0_sq }
    }

    fn value_at(&self, p: usize, lam: &DVector<f64>) -> f64 {
        ((lam.transpose() * &self.grams[p] * lam)[(0, 0)] - 2.0 * self.cross[p].dot(lam) + self.x0_sq[p]).max(0.0)
    }

    fn weighted(&self, w: &[f64]) -> (DMatrix<f64>, DVector<f64>, f64) {
        let m = self.cross[0].len();
        let mut q = DMatrix::zeros(m, m);
        let mut b = DVector::zeros(m);
        let mut c = 0.0;
        for (p, &wp) in w.iter().enumerate() {
            if wp > 0.0 {
                q += &self.grams[p] * wp;
                b += &self.cross[p] * wp;
                c += self.x0_sq[p] * wp;
            }
        }
        (q, b, c)
    }

    /// `min_λ f_p(λ)`: squared distance of `x0(p)` to the hull of the vertex
    /// values at `p`.
    fn node_distance(&self, p: usize) -> f64 {
        simplex_qp(&self.grams[p], &self.cross[p], self.x0_sq[p]).lower.max(0.0)
    }
}

/// Best mixed state against the hull by column generation: the restricted
/// game over generated mixtures is an LP in the state weights; each new
/// column is the best response to the current weights.
fn hull_game(data: &HullData, tol: f64) -> Result<(Vec<f64>, f64, f64)> {
    let n = data.x0_sq.len();
    let m = data.cross[0].len();
    let mut columns: Vec<DVector<f64>> = (0..m)
        .map(|k| {
            let mut e = DVector::zeros(m);
            e[k] = 1.0;
            e
        })
        .collect();
    let mut best_lower = f64::NEG_INFINITY;
    let mut best_w = vec![1.0 / n as f64; n];
    let mut upper = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..500 {
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let t = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
        let ws: Vec<_> = (0..n).map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
        lp.add_constraint(ws.iter().map(|&w| (w, 1.0)), ComparisonOp::Eq, 1.0);
        for col in &columns {
            let mut expr: Vec<_> = (0..n).map(|p| (ws[p], -data.value_at(p, col))).collect();
            expr.push((t, 1.0));
            lp.add_constraint(expr, ComparisonOp::Le, 0.0);
        }
        let sol = lp
            .solve()
            .map_err(|e| Error::Solver(format!("{e:?}")))?
            .into_solution()
            .map_err(|_| Error::Solver("LP interrupted".into()))?;
        upper = upper.min(sol.objective());
        let w: Vec<f64> = {
            let raw: Vec<f64> = ws.iter().map(|&v| sol.var_value(v).max(0.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        };
        let (q, b, c) = data.weighted(&w);
        let resp = simplex_qp(&q, &b, c);
        if resp.lower > best_lower + tol * (1.0 + best_lower.abs()) {
            stalled = 0;
        } else {
            stalled += 1;
        }
        if resp.lower > best_lower {
            best_lower = resp.lower;
            best_w = w.clone();
        }
        // Stop at the tolerance, or once the response no longer moves: the
        // remaining gap is then set by the inner solver's accuracy.
        if upper - best_lower <= tol * (1.0 + upper.abs()) || stalled >= 5 {
            break;
        }
        columns.push(resp.lambda);
    }
    Ok((best_w, best_lower, upper))
}

pub fn find_separating_state(problem: &SeparationProblem) -> Result<SeparationCertificate> {
    problem.validate()?;
    match &problem.set {
        ConvexSet::Submodule(s) => {
            let d = submodule_distance(s, &problem.x0)?;
            if d.delta <= SEPARATION_TOL {
                return Err(Error::Hypothesis("x0 lies in the closure of L; no separating state exists".into()));
            }
            let (p, margin) = d
                .per_node
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (p, v)| if v > acc.1 { (p, v) } else { acc });
            Ok(SeparationCertificate {
                state: State::pure(p),
                margin,
                kind: CertificateKind::PureState,
                delta: d.delta,
            })
        }
        ConvexSet::ConvexHull { vertices } => {
            let data = HullData::new(vertices, &problem.x0);
            let (w, margin, upper) = hull_game(&data, 1e-9)?;
            if upper <= SEPARATION_TOL || margin <= 0.0 {
                return Err(Error::Hypothesis("x0 lies in the closure of L; no separating state exists".into()));
            }
            let support: Vec<usize> = (0..w.len()).filter(|&p| w[p] > 1e-12).collect();
            let (state, kind) = if support.len() == 1 {
                (State::pure(support[0]), CertificateKind::PureState)
            } else {
                let mut w = w;
                w.iter_mut().for_each(|x| {
                    if *x <= 1e-12 {
                        *x = 0.0
                    }
                });
                let s: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= s);
                (State::measure(w), CertificateKind::MixedState)
            };
            Ok(SeparationCertificate {
                state,
                margin,
                kind,
                delta: upper,
            })
        }
    }
}

/// Smallest value of `ω(a) - margin` over fresh samples of `A`.
pub fn certificate_slack<R: Rng + ?Sized>(
    problem: &SeparationProblem,
    cert: &SeparationCertificate,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let mut slack = f64::INFINITY;
    for a in problem.sample_a(rng, samples) {
        slack = slack.min(evaluate_state(&cert.state, &a)?.re - cert.margin);
    }
    Ok(slack)
}

/// The hat `f_{t,n}` of height 1 at `t` with support `[t - 1/n, t + 1/n]`,
/// which must stay inside the open unit interval.
pub fn hat_function(t: f64, n: usize, space: &BaseSpace) -> Result<AlgebraElement> {
    let r = 1.0 / n as f64;
    if n == 0 || t - r <= 0.0 || t + r >= 1.0 {
        return Err(Error::input(format!("support of the hat at {t} with n = {n} leaves (0, 1)")));
    }
    Ok(tent(space, t, n as f64))
}

#[derive(Debug, Clone, Serialize)]
pub struct FlatteningReport {
    pub count: usize,
    pub n: usize,
    pub peaks: Vec<f64>,
    pub max_value: f64,
    pub bound: f64,
    pub member_norms: Vec<f64>,
}

/// `(1/N) Σ f_{t_j, n}` with `t_j = j/(N+1)` and `n = 2N+2`: a convex
/// combination of norm-one positive elements with norm `1/N`.
pub fn flattening_combination(count: usize, space: &BaseSpace) -> Result<(AlgebraElement, FlatteningReport)> {
    if count == 0 {
        return Err(Error::input("need at least one hat"));
    }
    let n = 2 * count + 2;
    let BaseSpace::Grid { a, b, n: nodes } = space else {
        return Err(Error::input("flattening needs an interval grid"));
    };
    if *a != 0.0 || *b != 1.0 || (nodes - 1) % n != 0 {
        return Err(Error::input(format!(
            "grid on [0, 1] must resolve 1/{n}: node count minus one must be a multiple of {n}"
        )));
    }
    let mut sum = AlgebraElement::zero(space);
    let mut peaks = Vec::with_capacity(count);
    let mut member_norms = Vec::with_capacity(count);
    for j in 1..=count {
        let t = j as f64 / (count + 1) as f64;
        let f = hat_function(t, n, space)?;
        member_norms.push(f.norm());
        peaks.push(t);
        sum = sum.add(&f)?;
    }
    let combo = sum.scale(C64::from(1.0 / count as f64));
    let max_value = combo.max_re();
    Ok((
        combo,
        FlatteningReport {
            count,
            n,
            peaks,
            max_value,
            bound: 1.0 / count as f64,
            member_norms,
        },
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeCombination {
    pub x: f64,
    /// Weight on the left hat.
    pub weight_left: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PureCounterexampleReport {
    pub epsilon: f64,
    pub bound: f64,
    pub per_node: Vec<NodeCombination>,
    /// Largest `ω_p(⟨f, f⟩)` over grid points for the chosen combinations.
    pub worst_value: f64,
    pub min_hull_norm: f64,
    pub argmin_weight: f64,
    pub mixed_certificate: Option<SeparationCertificate>,
}

/// The hull of the two hats at 1/4 and 3/4 (n = 5) stays at sup-distance
/// 1/2 from zero, yet every point evaluation sees a member of size `ε`.
pub fn pure_state_counterexample(eps: f64, space: &BaseSpace) -> Result<PureCounterexampleReport> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::input("ε must lie in (0, 1]"));
    }
    let f1 = hat_function(0.25, 5, space)?;
    let f2 = hat_function(0.75, 5, space)?;
    let mut per_node = Vec::with_capacity(space.len());
    for p in 0..space.len() {
        let x = space.coord(p);
        let wl = if x <= 0.5 { eps } else { 1.0 - eps };
        let v = f1.values[p] * wl + f2.values[p] * (1.0 - wl);
        per_node.push(NodeCombination {
            x,
            weight_left: wl,
            value: v.norm_sqr(),
        });
    }
    let worst_value = per_node.iter().map(|c| c.value).fold(0.0, f64::max);
    let (mut min_hull_norm, mut argmin_weight) = (f64::INFINITY, 0.0);
    for k in 0..=1000 {
        let l = k as f64 * 1e-3;
        let norm = f1.scale(C64::from(l)).add(&f2.scale(C64::from(1.0 - l)))?.norm();
        if norm < min_hull_norm {
            min_hull_norm = norm;
            argmin_weight = l;
        }
    }
    let to_vec = |f: &AlgebraElement| ModuleVector::new(space.clone(), 1, f.values.iter().map(|v| vec![*v]).collect());
    let problem = SeparationProblem {
        set: ConvexSet::ConvexHull {
            vertices: vec![to_vec(&f1)?, to_vec(&f2)?],
        },
        x0: ModuleVector::zero(space, 1),
    };
    Ok(PureCounterexampleReport {
        epsilon: eps,
        bound: eps * eps,
        per_node,
        worst_value,
        min_hull_norm,
        argmin_weight,
        mixed_certificate: find_separating_state(&problem).ok(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub matrix_gap: f64,
    pub chain_gap: f64,
    pub violating_node: Option<usize>,
}

impl InequalityReport {
    pub fn holds(&self) -> bool {
        self.violating_node.is_none()
    }
}

/// Checks nodewise that `Σ λ_k λ_l ⟨y_k, y_l⟩ ≤ Σ λ_k ⟨y_k, y_k⟩` and
/// `Σ λ_j ⟨y_j - x0, y_j - x0⟩ ≥ ⟨x0 - Σ λ_j y_j, x0 - Σ λ_j y_j⟩`.
/// The gaps are the smallest right-minus-left margins.
pub fn convex_inequality_check(ys: &[ModuleVector], lambdas: &[f64], x0: &ModuleVector) -> Result<InequalityReport> {
    if ys.is_empty() || ys.len() != lambdas.len() {
        return Err(Error::input("need one weight per vector"));
    }
    if lambdas.iter().any(|l| *l < 0.0) || (lambdas.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::input("weights must be convex"));
    }
    let space = &x0.space;
    let mut lhs = AlgebraElement::zero(space);
    let mut rhs = AlgebraElement::zero(space);
    let mut chain_lhs = AlgebraElement::zero(space);
    for (k, yk) in ys.iter().enumerate() {
        for (l, yl) in ys.iter().enumerate() {
            lhs = lhs.add(&inner_product(yk, yl)?.scale(C64::from(lambdas[k] * lambdas[l])))?;
        }
        rhs = rhs.add(&inner_product(yk, yk)?.scale(C64::from(lambdas[k])))?;
        let d = yk.sub(x0)?;
        chain_lhs = chain_lhs.add(&inner_product(&d, &d)?.scale(C64::from(lambdas[k])))?;
    }
    let mean = combine(ys, lambdas);
    let r = x0.sub(&mean)?;
    let chain_rhs = inner_product(&r, &r)?;
    let mut matrix_gap = f64::INFINITY;
    let mut chain_gap = f64::INFINITY;
    let mut violating_node = None;
    for p in 0..space.len() {
        let scale = 1.0 + rhs.values[p].norm() + chain_lhs.values[p].norm();
        let g1 = (rhs.values[p] - lhs.values[p]).re;
        let g2 = (chain_lhs.values[p] - chain_rhs.values[p]).re;
        matrix_gap = matrix_gap.min(g1);
        chain_gap = chain_gap.min(g2);
        if violating_node.is_none() && (g1 < -1e-10 * scale || g2 < -1e-10 * scale) {
            violating_node = Some(p);
        }
    }
    Ok(InequalityReport {
        matrix_gap,
        chain_gap,
        violating_node,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AConvexSearchReport {
    pub trials: usize,
    /// Trials where the best pure-state margin fell short of the mixed-state
    /// value by more than the tolerance.
    pub counterexamples: usize,
    pub max_shortfall: f64,
}

/// Randomized search for A-convex sets that a state separates from a point
/// while no pure state does.
///
/// Over a finite space with a commutative algebra, the A-convex hull
/// `{Σ ρ_j* y_j ρ_j : Σ ρ_j*ρ_j = 1}` of `y_1..y_m` is the convex hull of all
/// nodewise selections `p ↦ y_{σ(p)}(p)`. The harness feeds these `m^n`
/// vertices to the mixed-state solver and compares with the best pure state.
pub fn a_convex_search<R: Rng + ?Sized>(
    nodes: usize,
    fiber_dim: usize,
    vertices: usize,
    trials: usize,
    rng: &mut R,
) -> Result<AConvexSearchReport> {
    let selections = (vertices as u64).checked_pow(nodes as u32).filter(|k| *k <= 4096);
    let Some(selections) = selections else {
        return Err(Error::input("too many nodewise selections for the search harness"));
    };
    let space = BaseSpace::finite(nodes)?;
    let mut counterexamples = 0;
    let mut max_shortfall = 0.0f64;
    for _ in 0..trials {
        let ys: Vec<Vec<_>> = (0..vertices)
            .map(|_| (0..nodes).map(|_| linalg::random_cvec(rng, fiber_dim)).collect())
            .collect();
        let x0 = ModuleVector::from_fibers(&space, (0..nodes).map(|_| linalg::random_cvec(rng, fiber_dim) * C64::from(3.0)).collect())?;
        let hull: Vec<ModuleVector> = (0..selections)
            .map(|mut code| {
                let fibers = (0..nodes)
                    .map(|p| {
                        let j = (code % vertices as u64) as usize;
                        code /= vertices as u64;
                        ys[j][p].clone()
                    })
                    .collect();
                ModuleVector::from_fibers(&space, fibers)
            })
            .collect::<Result<_>>()?;
        let data = HullData::new(&hull, &x0);
        let pure = (0..nodes).map(|p| data.node_distance(p)).fold(0.0, f64::max);
        let (_, mixed, _) = hull_game(&data, 1e-9)?;
        let shortfall = mixed - pure;
        max_shortfall = max_shortfall.max(shortfall);
        if shortfall > 1e-7 * (1.0 + mixed) {
            counterexamples += 1;
        }
    }
    Ok(AConvexSearchReport {
        trials,
        counterexamples,
        max_shortfall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_points() -> (BaseSpace, SeparationProblem) {
        let s = BaseSpace::finite(2).unwrap();
        let g = ModuleVector::new(s.clone(), 2, vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0); 2]]).unwrap();
        let x0 = ModuleVector::new(s.clone(), 2, vec![vec![c(1.0, 0.0), c(0.0, 0.0)]; 2]).unwrap();
        let p = SeparationProblem {
            set: ConvexSet::Submodule(Submodule::new(vec![g]).unwrap()),
            x0,
        };
        (s, p)
    }

    #[test]
    fn submodule_separation_is_pure() {
        let (_, p) = two_points();
        let cert = find_separating_state(&p).unwrap();
        assert_eq!(cert.state, State::pure(1));
        assert_eq!(cert.kind, CertificateKind::PureState);
        assert!((cert.margin - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(certificate_slack(&p, &cert, 200, &mut rng).unwrap() >= -1e-12);
    }

    #[test]
    fn functions_vanishing_at_zero() {
        let s = BaseSpace::unit_grid(41).unwrap();
        let g = ModuleVector::from_fn(&s, 1, |x| vec![C64::from(x)]).unwrap();
        let x0 = ModuleVector::from_fn(&s, 1, |_| vec![C64::from(1.0)]).unwrap();
        let p = SeparationProblem {
            set: ConvexSet::Submodule(Submodule::new(vec![g.clone()]).unwrap()),
            x0: x0.clone(),
        };
        let cert = find_separating_state(&p).unwrap();
        assert_eq!(cert.state, State::pure(0));
        assert!((cert.margin - 1.0).abs() < 1e-12);
        // Lebesgue measure sees x0 inside the closure: inf over y of
        // ∫|y - 1|² is zero, approached by y = min(1, kx).
        let leb = State::right_riemann(&s);
        let mut best = f64::INFINITY;
        for k in [1.0, 10.0, 100.0, 1000.0] {
            let coeff = AlgebraElement::from_real_fn(&s, |x| if x == 0.0 { 0.0 } else { (k * x).min(1.0) / x });
            let y = g.act(&coeff).unwrap();
            let d = y.sub(&x0).unwrap();
            best = best.min(evaluate_state(&leb, &inner_product(&d, &d).unwrap()).unwrap().re);
        }
        assert!(best < 1e-12);

        let inside = SeparationProblem {
            set: ConvexSet::Submodule(Submodule::new(vec![g.clone()]).unwrap()),
            x0: g,
        };
        assert!(matches!(find_separating_state(&inside), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn hat_examples() {
        let s = BaseSpace::unit_grid(41).unwrap();
        let f = hat_function(0.5, 4, &s).unwrap();
        assert!((f.values[s.node_at(0.5).unwrap()].re - 1.0).abs() < 1e-15);
        assert!(f.values[s.node_at(0.25).unwrap()].re.abs() < 1e-15);
        let s8 = BaseSpace::unit_grid(81).unwrap();
        let f = hat_function(0.5, 4, &s8).unwrap();
        assert!((f.values[s8.node_at(0.375).unwrap()].re - 0.5).abs() < 1e-14);
        assert!(hat_function(0.1, 4, &s).is_err());
    }

    #[test]
    fn flattening_examples() {
        let s = BaseSpace::unit_grid(221).unwrap();
        let (_, r) = flattening_combination(10, &s).unwrap();
        assert!(r.max_value <= 0.1 + 1e-15);
        assert!(r.member_norms.iter().all(|n| (n - 1.0).abs() < 1e-15));
        let s = BaseSpace::unit_grid(5).unwrap();
        let (f, r) = flattening_combination(1, &s).unwrap();
        assert!((r.max_value - 1.0).abs() < 1e-15 && (f.norm() - 1.0).abs() < 1e-15);
        assert!(flattening_combination(10, &BaseSpace::unit_grid(100).unwrap()).is_err());
    }

    #[test]
    fn pure_counterexample() {
        let s = BaseSpace::unit_grid(101).unwrap();
        let r = pure_state_counterexample(0.1, &s).unwrap();
        assert!(r.worst_value <= 0.01 + 1e-15);
        let at = |x: f64| r.per_node.iter().find(|c| (c.x - x).abs() < 1e-12).unwrap().clone();
        assert!((at(0.3).weight_left - 0.1).abs() < 1e-15);
        assert!((at(0.7).weight_left - 0.9).abs() < 1e-15);
        assert!((r.min_hull_norm - 0.5).abs() < 1e-12 && (r.argmin_weight - 0.5).abs() < 1e-12);
        let cert = r.mixed_certificate.unwrap();
        assert_eq!(cert.kind, CertificateKind::MixedState);
        assert!((cert.margin - 0.25).abs() < 1e-6, "{}", cert.margin);
    }

    #[test]
    fn hull_margin_matches_brute_force_on_two_points() {
        // Two nodes, two scalar vertices: value min_λ max(...) by a fine scan.
        let s = BaseSpace::finite(2).unwrap();
        let v1 = ModuleVector::new(s.clone(), 1, vec![vec![c(1.0, 0.0)], vec![c(0.0, 0.0)]]).unwrap();
        let v2 = ModuleVector::new(s.clone(), 1, vec![vec![c(0.0, 0.0)], vec![c(2.0, 0.0)]]).unwrap();
        let x0 = ModuleVector::zero(&s, 1);
        // The two branches cross at λ = 2/3.
        let exact = 4.0 / 9.0;
        let mut brute = f64::INFINITY;
        for k in 0..=3000 {
            let l = k as f64 / 3000.0;
            brute = brute.min((l * l).max(4.0 * (1.0 - l) * (1.0 - l)));
        }
        assert!((brute - exact).abs() < 1e-12);
        let p = SeparationProblem {
            set: ConvexSet::ConvexHull { vertices: vec![v1, v2] },
            x0,
        };
        let cert = find_separating_state(&p).unwrap();
        assert!((cert.margin - exact).abs() < 1e-8, "{}", cert.margin);
        assert!(cert.margin <= cert.delta + 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(certificate_slack(&p, &cert, 200, &mut rng).unwrap() >= -1e-9);
    }

    #[test]
    fn inequality_examples() {
        let s = BaseSpace::finite(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rv = |rng: &mut ChaCha8Rng| ModuleVector::from_fibers(&s, (0..3).map(|_| linalg::random_cvec(rng, 2)).collect()).unwrap();
        let y = rv(&mut rng);
        let x0 = rv(&mut rng);
        let r = convex_inequality_check(std::slice::from_ref(&y), &[1.0], &x0).unwrap();
        assert!(r.holds() && r.matrix_gap.abs() < 1e-12 && r.chain_gap.abs() < 1e-12);
        let ys = vec![rv(&mut rng), rv(&mut rng)];
        assert!(convex_inequality_check(&ys, &[0.5, 0.5], &x0).unwrap().holds());
    }

    #[test]
    fn a_convex_hulls_separate_by_pure_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = a_convex_search(3, 2, 3, 10, &mut rng).unwrap();
        assert_eq!(r.counterexamples, 0);
    }
}
