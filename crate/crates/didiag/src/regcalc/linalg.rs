//! Dense complex linear algebra helpers shared by the numeric modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Hermitian part `(m + m†) / 2`.
pub fn herm_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Largest entry of the anti-Hermitian part, used to decide whether an operator is Hermitian.
pub fn anti_herm_norm(m: &CMat) -> f64 {
    let d = m - m.adjoint();
    d.iter().map(|z| z.norm()).fold(0.0, f64::max) * 0.5
}

/// Eigen-decomposition of the Hermitian part of `m`, eigenvalues ascending.
///
/// Uses faer: nalgebra's `symmetric_eigen` loses about 1e-9 relative accuracy when
/// small eigenvalues cluster, which breaks positive parts near convergence.
pub fn herm_eig(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (vec![], CMat::zeros(0, 0));
    }
    let h = herm_part(m);
    let a = faer::Mat::<C64>::from_fn(n, n, |i, j| h[(i, j)]);
    let eig = a.self_adjoint_eigen(faer::Side::Lower).expect("self-adjoint eigendecomposition converges");
    let (s, u) = (eig.S().column_vector(), eig.U());
    let vals = (0..n).map(|i| s[i].re).collect();
    (vals, CMat::from_fn(n, n, |i, j| u[(i, j)]))
}

pub fn herm_eigenvalues(m: &CMat) -> Vec<f64> {
    herm_eig(m).0
}

/// Apply a real function to the spectrum of a Hermitian matrix.
pub fn herm_fn(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = herm_eig(m);
    let n = vals.len();
    let mut d = CMat::zeros(n, n);
    for (i, v) in vals.iter().enumerate() {
        d[(i, i)] = c(f(*v));
    }
    &vecs * d * vecs.adjoint()
}

/// Square root of a PSD matrix; slightly negative eigenvalues are clamped to zero.
pub fn psd_sqrt(m: &CMat) -> CMat {
    herm_fn(m, |x| x.max(0.0).sqrt())
}

/// Moore-Penrose inverse square root on the support (eigenvalues above `cut`).
pub fn psd_inv_sqrt(m: &CMat, cut: f64) -> CMat {
    herm_fn(m, |x| if x > cut { 1.0 / x.sqrt() } else { 0.0 })
}

pub fn psd_pinv(m: &CMat, cut: f64) -> CMat {
    herm_fn(m, |x| if x > cut { 1.0 / x } else { 0.0 })
}

/// Positive part of a Hermitian matrix.
pub fn pos_part(m: &CMat) -> CMat {
    herm_fn(m, |x| x.max(0.0))
}

/// Trace norm. Uses the spectrum when `m` is Hermitian, singular values otherwise.
pub fn trace_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    if m.nrows() == m.ncols() && anti_herm_norm(m) <= 1e-12 * scale {
        herm_eigenvalues(m).iter().map(|v| v.abs()).sum()
    } else {
        let a = faer::Mat::<C64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
        a.singular_values().expect("singular values converge").iter().sum()
    }
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Row-major strides for a mixed-radix index.
pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

pub fn unflatten(mut idx: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        out[k] = idx % dims[k];
        idx /= dims[k];
    }
    out
}

pub fn flatten(digits: &[usize], dims: &[usize]) -> usize {
    digits.iter().zip(dims).fold(0, |acc, (d, n)| acc * n + d)
}

/// Orthonormal basis of the orthogonal complement of the column span of `m` (columns assumed orthonormal or zero).
pub fn complement_basis(m: &CMat, tol: f64) -> CMat {
    let n = m.nrows();
    let proj = m * m.adjoint();
    let comp = identity(n) - proj;
    let (vals, vecs) = herm_eig(&comp);
    let cols: Vec<usize> = (0..n).filter(|&i| vals[i] > 0.5 && vals[i] > tol).collect();
    let mut out = CMat::zeros(n, cols.len());
    for (k, &i) in cols.iter().enumerate() {
        out.set_column(k, &vecs.column(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radix_round_trip() {
        let dims = [2, 3, 4];
        for i in 0..24 {
            assert_eq!(flatten(&unflatten(i, &dims), &dims), i);
        }
        assert_eq!(strides(&dims), vec![12, 4, 1]);
    }

    #[test]
    fn trace_norm_of_pauli_z() {
        let z = CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), c(-1.0)]));
        assert!((trace_norm(&z) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn trace_norm_non_hermitian_uses_singular_values() {
        let mut m = CMat::zeros(2, 2);
        m[(0, 1)] = c(3.0);
        assert!((trace_norm(&m) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let mut m = CMat::zeros(2, 2);
        m[(0, 0)] = c(2.0);
        m[(0, 1)] = C64::new(0.5, 0.5);
        m[(1, 0)] = C64::new(0.5, -0.5);
        m[(1, 1)] = c(1.0);
        let s = psd_sqrt(&m);
        assert!(max_abs_diff(&(&s * &s), &m) < 1e-12);
    }
}
