//! The model operator `-i d/dx` on [0, 1], discretized with the box scheme.
//!
//! A nodal vector `f_0..f_N` is the domain parameter. The Hilbert space is
//! `C^N` (one coordinate per cell) with
//!
//! * embedding `(Jf)_j = √h (f_j + f_{j+1}) / 2`,
//! * action    `(Af)_j = -i (f_{j+1} - f_j) / √h`.
//!
//! With these scalings the discrete Green identity
//! `⟨Af, Jg⟩ - ⟨Jf, Ag⟩ = i (conj(f_N) g_N - conj(f_0) g_0)` is exact, so the
//! relation with no boundary constraint is exactly the adjoint of the one
//! with both endpoint values pinned to zero.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec, C64, I};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DiracGrid {
    pub nodes: usize,
}

impl DiracGrid {
    pub fn new(nodes: usize) -> Result<Self> {
        if nodes < 3 {
            return Err(Error::input(format!("Dirac grid needs at least 3 nodes, got {nodes}")));
        }
        Ok(Self { nodes })
    }

    pub fn cells(&self) -> usize {
        self.nodes - 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells() as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.h()
    }

    pub fn midpoint(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.h()
    }

    fn embed_coef(&self) -> C64 {
        C64::from(self.h().sqrt() / 2.0)
    }

    /// Diagonal and superdiagonal coefficient of the action.
    fn action_coefs(&self) -> (C64, C64) {
        let s = 1.0 / self.h().sqrt();
        (c(0.0, s), c(0.0, -s))
    }

    pub fn embed(&self, f: &CVec) -> CVec {
        let m = self.embed_coef();
        CVec::from_fn(self.cells(), |j, _| m * (f[j] + f[j + 1]))
    }

    pub fn act(&self, f: &CVec) -> CVec {
        let (a, b) = self.action_coefs();
        CVec::from_fn(self.cells(), |j, _| a * f[j] + b * f[j + 1])
    }

    pub fn embed_adjoint(&self, y: &CVec) -> CVec {
        let m = self.embed_coef().conj();
        let n = self.cells();
        CVec::from_fn(self.nodes, |k, _| {
            let mut s = C64::from(0.0);
            if k < n {
                s += m * y[k];
            }
            if k > 0 {
                s += m * y[k - 1];
            }
            s
        })
    }

    pub fn act_adjoint(&self, y: &CVec) -> CVec {
        let (a, b) = self.action_coefs();
        let n = self.cells();
        CVec::from_fn(self.nodes, |k, _| {
            let mut s = C64::from(0.0);
            if k < n {
                s += a.conj() * y[k];
            }
            if k > 0 {
                s += b.conj() * y[k - 1];
            }
            s
        })
    }

    pub fn embed_matrix(&self) -> CMat {
        let m = self.embed_coef();
        CMat::from_fn(self.cells(), self.nodes, |j, k| if k == j || k == j + 1 { m } else { C64::from(0.0) })
    }

    pub fn action_matrix(&self) -> CMat {
        let (a, b) = self.action_coefs();
        CMat::from_fn(self.cells(), self.nodes, |j, k| {
            if k == j {
                a
            } else if k == j + 1 {
                b
            } else {
                C64::from(0.0)
            }
        })
    }

    /// `⟨f, g⟩_D = ⟨Jf, Jg⟩ + ⟨Af, Ag⟩`.
    pub fn graph_inner(&self, f: &CVec, g: &CVec) -> C64 {
        self.embed(f).dotc(&self.embed(g)) + self.act(f).dotc(&self.act(g))
    }

    pub fn graph_norm(&self, f: &CVec) -> f64 {
        self.graph_inner(f, f).re.max(0.0).sqrt()
    }

    /// `G f` for the graph Gram matrix `G = J*J + A*A`.
    pub fn graph_apply(&self, f: &CVec) -> CVec {
        self.embed_adjoint(&self.embed(f)) + self.act_adjoint(&self.act(f))
    }

    /// L² norm of the represented function (midpoint quadrature).
    pub fn l2_norm(&self, f: &CVec) -> f64 {
        self.embed(f).norm()
    }

    /// Diagonal and subdiagonal of `B*B` for the bidiagonal `B` with
    /// coefficients `(a, b)` on each row.
    fn bidiag_gram(&self, a: C64, b: C64) -> (Vec<f64>, Vec<C64>) {
        let n = self.cells();
        let diag = (0..self.nodes)
            .map(|k| {
                let mut d = 0.0;
                if k < n {
                    d += a.norm_sqr();
                }
                if k > 0 {
                    d += b.norm_sqr();
                }
                d
            })
            .collect();
        let off = vec![b.conj() * a; n];
        (diag, off)
    }

    fn graph_gram_tridiag(&self) -> (Vec<f64>, Vec<C64>) {
        let m = self.embed_coef();
        let (a, b) = self.action_coefs();
        let (dj, oj) = self.bidiag_gram(m, m);
        let (da, oa) = self.bidiag_gram(a, b);
        (
            dj.iter().zip(&da).map(|(x, y)| x + y).collect(),
            oj.iter().zip(&oa).map(|(x, y)| x + y).collect(),
        )
    }

    /// Number of generalized eigenvalues of the pencil `(B*B, G)` below `s`,
    /// with `B = A - zJ`. These are the squared singular values of `B`
    /// measured in the graph norm.
    fn pencil_count_below(&self, z: C64, s: f64) -> usize {
        let m = self.embed_coef();
        let (a, b) = self.action_coefs();
        let (db, ob) = self.bidiag_gram(a - z * m, b - z * m);
        let (dg, og) = self.graph_gram_tridiag();
        let diag: Vec<f64> = db.iter().zip(&dg).map(|(x, y)| x - s * y).collect();
        let off: Vec<C64> = ob.iter().zip(&og).map(|(x, y)| x - s * y).collect();
        linalg::tridiag_count_below(&diag, &off, 0.0)
    }

    /// Smallest `s` with at least `k` pencil eigenvalues `≤ s`, by bisection.
    fn pencil_eigenvalue(&self, z: C64, k: usize) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 2.0 * (1.0 + z.norm_sqr()));
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.pencil_count_below(z, mid) >= k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Kernel of `D_max - z`: solves the two-term recursion, normalizes in the
    /// graph norm and makes the first entry real and positive. The rank
    /// analysis uses graph-normalized singular values of `A - zJ`.
    pub fn max_kernel(&self, z: C64, tau: f64) -> Result<(CVec, KernelReport)> {
        let m = self.embed_coef();
        let (a, b) = self.action_coefs();
        let (ra, rb) = (a - z * m, b - z * m);
        if rb.norm() <= f64::EPSILON * ra.norm().max(1.0) {
            return Err(Error::Rank(format!("kernel recursion breaks down at z = {z}")));
        }
        let ratio = -ra / rb;
        let mut f = CVec::zeros(self.nodes);
        f[0] = C64::from(1.0);
        for j in 0..self.cells() {
            f[j + 1] = f[j] * ratio;
        }
        let norm = self.graph_norm(&f);
        f /= C64::from(norm);
        let residual = (self.act(&f) - self.embed(&f) * z).norm();
        let sigma_max = self.pencil_eigenvalue(z, self.nodes).sqrt();
        let thr = tau * sigma_max;
        let kernel_dim = self.pencil_count_below(z, thr * thr);
        let gap = self.pencil_eigenvalue(z, 2).sqrt();
        let report = KernelReport {
            kernel_dim,
            residual,
            sigma_max,
            gap,
        };
        if kernel_dim != 1 {
            return Err(Error::Rank(format!(
                "ker(D_max - ({z})) has numerical dimension {kernel_dim}, expected 1 (threshold {thr:.3e})"
            )));
        }
        Ok((f, report))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelReport {
    pub kernel_dim: usize,
    /// `‖(A - zJ) φ‖` for the graph-normalized kernel vector.
    pub residual: f64,
    pub sigma_max: f64,
    /// Smallest nonzero graph-normalized singular value.
    pub gap: f64,
}

/// Default defect-kernel threshold: `1e-8 · n`.
pub fn default_tau(n: usize) -> f64 {
    1e-8 * n as f64
}

/// The kernel vectors of `D_max ∓ i`, the boundary functionals and the
/// vectors built from them.
#[derive(Debug, Clone, Serialize)]
pub struct DeficiencyData {
    pub grid: DiracGrid,
    pub tau: f64,
    #[serde(skip)]
    pub phi_plus: CVec,
    #[serde(skip)]
    pub phi_minus: CVec,
    /// `α_+(ξ) = alpha_plus[0] ξ_0 + alpha_plus[1] ξ_N`.
    pub alpha_plus: [C64; 2],
    pub alpha_minus: [C64; 2],
    pub kernel_plus: KernelReport,
    pub kernel_minus: KernelReport,
    /// Largest interior coefficient of the functionals `⟨φ_±, ·⟩_D`,
    /// relative to the boundary coefficients.
    pub interior_residual: f64,
    pub l2_norm_plus: f64,
    pub l2_norm_minus: f64,
}

impl DeficiencyData {
    pub fn compute(grid: DiracGrid, tau: f64) -> Result<Self> {
        let (phi_plus, kernel_plus) = grid.max_kernel(I, tau)?;
        let (mut phi_minus, kernel_minus) = grid.max_kernel(-I, tau)?;
        // φ_- grows towards the right end; keep it positive there too.
        let phase = phi_minus[grid.cells()] / phi_minus[grid.cells()].norm();
        phi_minus /= phase;
        let row = |phi: &CVec| -> ([C64; 2], f64) {
            let g = grid.graph_apply(phi).map(|z| z.conj());
            let n = grid.cells();
            let ends = [g[0], g[n]];
            let scale = ends[0].norm() + ends[1].norm();
            let interior = (1..n).map(|k| g[k].norm()).fold(0.0, f64::max);
            (ends, interior / scale)
        };
        let (alpha_plus, rp) = row(&phi_plus);
        let (alpha_minus, rm) = row(&phi_minus);
        let interior_residual = rp.max(rm);
        if interior_residual > 1e-8 {
            return Err(Error::Rank(format!(
                "deficiency functionals are not boundary functionals (residual {interior_residual:.3e})"
            )));
        }
        Ok(Self {
            grid,
            tau,
            l2_norm_plus: grid.l2_norm(&phi_plus),
            l2_norm_minus: grid.l2_norm(&phi_minus),
            phi_plus,
            phi_minus,
            alpha_plus,
            alpha_minus,
            kernel_plus,
            kernel_minus,
            interior_residual,
        })
    }

    /// `α_+(ξ) = ⟨φ_+, ξ⟩_D` from the full graph inner product.
    pub fn alpha_plus(&self, xi: &CVec) -> C64 {
        self.grid.graph_inner(&self.phi_plus, xi)
    }

    pub fn alpha_minus(&self, xi: &CVec) -> C64 {
        self.grid.graph_inner(&self.phi_minus, xi)
    }

    /// Constraint row of `D_λ` on `(ξ_0, ξ_N)`: `α_+ - λ α_-`.
    pub fn extension_row(&self, lambda: C64) -> [C64; 2] {
        [
            self.alpha_plus[0] - lambda * self.alpha_minus[0],
            self.alpha_plus[1] - lambda * self.alpha_minus[1],
        ]
    }

    /// Discrete boundary multiplier: `ξ ∈ dom(D_λ)` iff `ξ_N = ζ ξ_0`.
    pub fn zeta(&self, lambda: C64) -> C64 {
        let r = self.extension_row(lambda);
        -r[0] / r[1]
    }

    pub fn eta(&self, lambda: C64) -> CVec {
        (&self.phi_plus * lambda + &self.phi_minus) / C64::from(2f64.sqrt())
    }

    pub fn eta_perp(&self, lambda: C64) -> CVec {
        (&self.phi_plus - &self.phi_minus * lambda.conj()) / C64::from(2f64.sqrt())
    }
}

/// `(1 - e^{-2})^{-1/2}`, the graph normalization of `e^{-t}`.
pub fn phi_constant() -> f64 {
    (1.0 - (-2.0f64).exp()).powf(-0.5)
}

/// Boundary multiplier of the continuum extension `D_λ`:
/// `f(1) = ζ f(0)` with `ζ = (λ + e) / (λ e + 1)`.
pub fn zeta_exact(lambda: C64) -> C64 {
    let e = std::f64::consts::E;
    (lambda + e) / (lambda * e + 1.0)
}

/// Eigenvalues of the discrete `D_λ` with boundary multiplier `ζ`:
/// `(2/h) tan(θ_k / 2)` with `θ_k = (arg ζ + 2πk) / N`. Returns `None` for
/// the index whose angle is `π` (an eigenvalue at infinity).
pub fn box_eigenvalue(grid: &DiracGrid, zeta: C64, k: i64) -> Option<f64> {
    let n = grid.cells() as f64;
    let theta = (zeta.arg() + 2.0 * std::f64::consts::PI * k as f64) / n;
    let half = theta / 2.0;
    if (half.cos()).abs() < 1e-14 {
        return None;
    }
    Some(2.0 / grid.h() * half.tan())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn green_identity_is_exact() {
        let g = DiracGrid::new(17).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        let f = linalg::random_cvec(&mut rng, 17);
        let h = linalg::random_cvec(&mut rng, 17);
        let lhs = g.act(&f).dotc(&g.embed(&h)) - g.embed(&f).dotc(&g.act(&h));
        let rhs = I * (f[16].conj() * h[16] - f[0].conj() * h[0]);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn matrices_match_structured_application() {
        let g = DiracGrid::new(9).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(2);
        let f = linalg::random_cvec(&mut rng, 9);
        let y = linalg::random_cvec(&mut rng, 8);
        assert!((g.embed_matrix() * &f - g.embed(&f)).norm() < 1e-13);
        assert!((g.action_matrix() * &f - g.act(&f)).norm() < 1e-13);
        assert!((g.embed_matrix().adjoint() * &y - g.embed_adjoint(&y)).norm() < 1e-13);
        assert!((g.action_matrix().adjoint() * &y - g.act_adjoint(&y)).norm() < 1e-13);
    }

    #[test]
    fn constant_and_exponential_samples() {
        let g = DiracGrid::new(201).unwrap();
        let one = CVec::from_element(201, C64::from(1.0));
        assert!(g.act(&one).norm() < 1e-12);
        let two_pi = 2.0 * std::f64::consts::PI;
        let f = CVec::from_fn(201, |j, _| (I * two_pi * g.node(j)).exp());
        let err = (g.act(&f) - g.embed(&f) * C64::from(two_pi)).norm();
        assert!(err / g.l2_norm(&f) < 1e-3 * two_pi);
    }

    #[test]
    fn kernel_vectors_match_exponentials() {
        let g = DiracGrid::new(401).unwrap();
        let d = DeficiencyData::compute(g, default_tau(401)).unwrap();
        let cst = phi_constant();
        let err_p: f64 = (0..g.cells())
            .map(|j| {
                let t = g.midpoint(j);
                let v = g.embed(&d.phi_plus)[j] / g.h().sqrt();
                (v - cst * (-t).exp()).norm_sqr() * g.h()
            })
            .sum::<f64>()
            .sqrt();
        assert!(err_p < 1e-4, "{err_p}");
        assert!((d.l2_norm_plus - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((d.l2_norm_minus - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((d.phi_minus[400].re - cst).abs() < 1e-4);
        assert!(d.alpha_plus(&d.phi_minus).norm() < 1e-12);
        assert!((d.alpha_plus(&d.phi_plus) - 1.0).norm() < 1e-12);
    }

    #[test]
    fn boundary_functionals_agree_with_graph_products() {
        let g = DiracGrid::new(33).unwrap();
        let d = DeficiencyData::compute(g, default_tau(33)).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(9);
        let xi = linalg::random_cvec(&mut rng, 33);
        let bp = d.alpha_plus[0] * xi[0] + d.alpha_plus[1] * xi[32];
        let bm = d.alpha_minus[0] * xi[0] + d.alpha_minus[1] * xi[32];
        assert!((bp - d.alpha_plus(&xi)).norm() < 1e-10);
        assert!((bm - d.alpha_minus(&xi)).norm() < 1e-10);
    }

    #[test]
    fn boundary_multiplier_converges() {
        let g = DiracGrid::new(1001).unwrap();
        let d = DeficiencyData::compute(g, default_tau(1001)).unwrap();
        for lambda in [C64::from(1.0), C64::from(-1.0), c(0.6, 0.8), c(0.0, -1.0)] {
            assert!((d.zeta(lambda) - zeta_exact(lambda)).norm() < 1e-6);
        }
        assert!((zeta_exact(C64::from(1.0)) - 1.0).norm() < 1e-15);
        assert!((zeta_exact(C64::from(-1.0)) + 1.0).norm() < 1e-15);
    }

    #[test]
    fn eta_vectors_are_graph_orthonormal() {
        let g = DiracGrid::new(65).unwrap();
        let d = DeficiencyData::compute(g, default_tau(65)).unwrap();
        let lambda = c(0.28, 0.96);
        let (e, ep) = (d.eta(lambda), d.eta_perp(lambda));
        assert!(g.graph_inner(&e, &ep).norm() < 1e-12);
        assert!((g.graph_norm(&e) - 1.0).abs() < 1e-12);
        assert!((g.graph_norm(&ep) - 1.0).abs() < 1e-12);
    }
}
