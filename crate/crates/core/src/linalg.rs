//! Dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Singular values in descending order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn op_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Orthonormal basis of the null space. Singular values below `rel_tol * s_max`
/// count as zero.
pub fn null_space(m: &CMat, rel_tol: f64) -> CMat {
    let (r, cols) = m.shape();
    if cols == 0 {
        return CMat::zeros(0, 0);
    }
    if r == 0 {
        return CMat::identity(cols, cols);
    }
    let sq = if r < cols {
        let mut p = CMat::zeros(cols, cols);
        p.view_mut((0, 0), (r, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let thr = rel_tol * smax.max(f64::MIN_POSITIVE);
    let idx: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= thr || smax == 0.0)
        .collect();
    let mut out = CMat::zeros(cols, idx.len());
    for (k, &i) in idx.iter().enumerate() {
        for j in 0..cols {
            out[(j, k)] = vt[(i, j)].conj();
        }
    }
    out
}

/// Orthonormal basis of the column space.
pub fn orth(m: &CMat, rel_tol: f64) -> CMat {
    let (r, cols) = m.shape();
    if r == 0 || cols == 0 {
        return CMat::zeros(r, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return CMat::zeros(r, 0);
    }
    let idx: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > rel_tol * smax)
        .collect();
    let mut out = CMat::zeros(r, idx.len());
    for (k, &i) in idx.iter().enumerate() {
        out.set_column(k, &u.column(i));
    }
    out
}

pub fn rank(m: &CMat, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        None => 0,
        Some(&smax) if smax == 0.0 => 0,
        Some(&smax) => s.iter().filter(|&&x| x > rel_tol * smax).count(),
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let h = (m + m.adjoint()) * C64::from(0.5);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Applies a real function to a Hermitian matrix through its spectrum.
pub fn hermitian_apply(m: &CMat, f: impl Fn(f64) -> C64) -> CMat {
    let (vals, u) = hermitian_eigen(m);
    let d = CVec::from_iterator(vals.len(), vals.iter().map(|&x| f(x)));
    let mut scaled = u.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= d[j];
    }
    scaled * u.adjoint()
}

/// `‖M − M*‖ / max(‖M‖, 1)` in Frobenius norm.
pub fn hermitian_residual(m: &CMat) -> f64 {
    let d = (m - m.adjoint()).norm();
    d / m.norm().max(1.0)
}

pub fn solve(m: &CMat, b: &CMat) -> Option<CMat> {
    if m.nrows() != m.ncols() {
        return None;
    }
    m.clone().lu().solve(b)
}

pub fn inverse(m: &CMat) -> Option<CMat> {
    m.clone().try_inverse()
}

pub fn block_diag(blocks: &[CMat]) -> CMat {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(r, cols);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), b.shape()).copy_from(b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

/// Stacks `top` above `bottom`.
pub fn vstack(top: &CMat, bottom: &CMat) -> CMat {
    assert_eq!(top.ncols(), bottom.ncols());
    let mut out = CMat::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    out
}

pub fn hstack(left: &CMat, right: &CMat) -> CMat {
    assert_eq!(left.nrows(), right.nrows());
    let mut out = CMat::zeros(left.nrows(), left.ncols() + right.ncols());
    out.view_mut((0, 0), left.shape()).copy_from(left);
    out.view_mut((0, left.ncols()), right.shape()).copy_from(right);
    out
}

/// Number of eigenvalues below `s` of the Hermitian tridiagonal matrix with
/// the given diagonal and subdiagonal, by counting negative LDL* pivots.
pub fn tridiag_count_below(diag: &[f64], off: &[C64], s: f64) -> usize {
    let mut count = 0;
    let mut d = 0.0f64;
    for k in 0..diag.len() {
        let mut v = diag[k] - s;
        if k > 0 {
            let denom = if d == 0.0 { f64::MIN_POSITIVE } else { d };
            v -= off[k - 1].norm_sqr() / denom;
        }
        if v < 0.0 {
            count += 1;
        }
        d = v;
    }
    count
}

pub fn random_cvec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    })
}

pub fn random_cmat<R: Rng + ?Sized>(rng: &mut R, r: usize, cols: usize) -> CMat {
    CMat::from_fn(r, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    })
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let m = random_cmat(rng, n, n);
    (&m + m.adjoint()) * C64::from(0.5)
}

/// Orthogonal projector onto the column span of an orthonormal `q`.
pub fn projector(q: &CMat) -> CMat {
    q * q.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn null_space_of_wide_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_cmat(&mut rng, 3, 7);
        let n = null_space(&m, 1e-10);
        assert_eq!(n.ncols(), 4);
        assert!((&m * &n).norm() < 1e-10);
        assert!((n.adjoint() * &n - CMat::identity(4, 4)).norm() < 1e-10);
    }

    #[test]
    fn sturm_count_matches_dense_eigen() {
        let diag = [2.0, 3.0, 1.0, 4.0, 2.5];
        let off = [c(0.5, 0.1), c(-1.0, 0.0), c(0.0, 0.7), c(0.3, -0.3)];
        let m = CMat::from_fn(5, 5, |i, j| {
            if i == j {
                C64::from(diag[i])
            } else if i == j + 1 {
                off[j]
            } else if j == i + 1 {
                off[i].conj()
            } else {
                C64::from(0.0)
            }
        });
        let (vals, _) = hermitian_eigen(&m);
        for s in [0.0, 1.0, 2.2, 3.0, 5.0] {
            let expect = vals.iter().filter(|&&v| v < s).count();
            assert_eq!(tridiag_count_below(&diag, &off, s), expect);
        }
    }

    #[test]
    fn hermitian_apply_square_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_cmat(&mut rng, 4, 4);
        let p = &a * a.adjoint() + CMat::identity(4, 4);
        let r = hermitian_apply(&p, |x| C64::from(x.sqrt()));
        assert!((&r * &r - &p).norm() < 1e-10);
    }
}
