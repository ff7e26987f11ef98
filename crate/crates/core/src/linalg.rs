//! Dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Largest entry modulus.
pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// `y += a x` elementwise.
pub fn axpy(y: &mut DMatrix<C64>, a: C64, x: &DMatrix<C64>) {
    debug_assert_eq!(y.shape(), x.shape());
    for (yv, xv) in y.iter_mut().zip(x.iter()) {
        *yv += a * xv;
    }
}

pub fn hermitize(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix (the anti-Hermitian part is
/// discarded). Eigenvalues ascending.
pub fn eigh(m: &DMatrix<C64>) -> (DVector<f64>, DMatrix<C64>) {
    let eig = SymmetricEigen::new(hermitize(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &k) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

/// `V f(Λ) V†` for a Hermitian matrix.
pub fn hermitian_fn(m: &DMatrix<C64>, f: impl Fn(f64) -> f64) -> DMatrix<C64> {
    let (vals, vecs) = eigh(m);
    let scaled = DMatrix::from_fn(vecs.nrows(), vecs.ncols(), |r, c| vecs[(r, c)] * C64::new(f(vals[c]), 0.0));
    scaled * vecs.adjoint()
}

/// Matrix exponential (Padé with scaling and squaring).
pub fn expm(m: &DMatrix<C64>) -> DMatrix<C64> {
    m.exp()
}

/// Thin SVD `m = U diag(s) V†`, singular values descending. Returns `(U, s, V†)`.
pub fn thin_svd(m: &DMatrix<C64>) -> Result<(DMatrix<C64>, DVector<f64>, DMatrix<C64>)> {
    let fm = faer::Mat::<C64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let svd = fm.thin_svd().map_err(|e| Error::NotConverged(format!("SVD: {e:?}")))?;
    let (u, v, sv) = (svd.U(), svd.V(), svd.S().column_vector());
    let k = sv.nrows();
    Ok((
        DMatrix::from_fn(m.nrows(), k, |i, j| u[(i, j)]),
        DVector::from_fn(k, |i, _| sv[i].re),
        DMatrix::from_fn(k, m.ncols(), |i, j| v[(j, i)].conj()),
    ))
}

pub fn trace(m: &DMatrix<C64>) -> C64 {
    m.diagonal().iter().sum()
}

/// Trace norm `‖m‖₁` of a Hermitian matrix.
pub fn trace_norm_hermitian(m: &DMatrix<C64>) -> f64 {
    eigh(m).0.iter().map(|v| v.abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(0.0, 1.0), C64::new(-1.0, 0.0)]));
        let e = expm(&m);
        assert!((e[(0, 0)] - C64::new(1f64.cos(), 1f64.sin())).norm() < 1e-14);
        assert!((e[(1, 1)].re - (-1f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn eigh_sorted_and_reconstructs() {
        let m = DMatrix::from_row_slice(2, 2, &[C64::new(2.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0), C64::new(2.0, 0.0)]);
        let (vals, vecs) = eigh(&m);
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 3.0).abs() < 1e-12);
        let back = hermitian_fn(&m, |x| x);
        assert!(max_abs(&(back - &m)) < 1e-12);
        assert!(max_abs(&(vecs.adjoint() * &vecs - DMatrix::identity(2, 2))) < 1e-12);
    }
}
