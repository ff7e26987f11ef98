//! Compressed sparse row matrices over `Complex64`.
//!
//! Storage is canonical: rows in order, column indices strictly increasing
//! within a row, and no explicitly stored zeros. Two matrices built from the
//! same entries therefore compare equal field by field.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self { nrows: n, ncols: n, indptr: (0..=n).collect(), indices: (0..n).collect(), values: vec![C64::new(1.0, 0.0); n] }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed and exact zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                rows.push(r);
                last = Some((r, c));
            }
        }
        let mut keep_idx = Vec::with_capacity(indices.len());
        let mut keep_val = Vec::with_capacity(values.len());
        for ((r, c), v) in rows.into_iter().zip(indices).zip(values) {
            if v != C64::new(0.0, 0.0) {
                indptr[r + 1] += 1;
                keep_idx.push(c);
                keep_val.push(v);
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Self { nrows, ncols, indptr, indices: keep_idx, values: keep_val }
    }

    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let mut trip = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                if v != C64::new(0.0, 0.0) {
                    trip.push((r, c, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), trip)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    /// Iterates `(col, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn scale(&self, s: C64) -> Self {
        if s == C64::new(0.0, 0.0) {
            return Self::zeros(self.nrows, self.ncols);
        }
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn adjoint(&self) -> Self {
        let trip = self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect();
        Self::from_triplets(self.ncols, self.nrows, trip)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols), "shape mismatch in add");
        let trip = self.triplets().chain(other.triplets()).collect();
        Self::from_triplets(self.nrows, self.ncols, trip)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale_real(-1.0))
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows, "shape mismatch in matmul");
        let mut trip = Vec::new();
        let mut acc: Vec<C64> = vec![C64::new(0.0, 0.0); other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        let mut mark = vec![false; other.ncols];
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if !mark[c] {
                        mark[c] = true;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &touched {
                trip.push((r, c, acc[c]));
                acc[c] = C64::new(0.0, 0.0);
                mark[c] = false;
            }
            touched.clear();
        }
        Self::from_triplets(self.nrows, other.ncols, trip)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz() * other.nnz());
        for (r1, c1, v1) in self.triplets() {
            for (r2, c2, v2) in other.triplets() {
                trip.push((r1 * other.nrows + r2, c1 * other.ncols + c2, v1 * v2));
            }
        }
        Self::from_triplets(self.nrows * other.nrows, self.ncols * other.ncols, trip)
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).sub(&other.matmul(self))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Max-norm of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.sub(other).max_abs()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.max_abs_diff(&self.adjoint()) <= tol
    }

    pub fn mul_vec(&self, x: &DVector<C64>) -> DVector<C64> {
        let mut y = DVector::zeros(self.nrows);
        self.mul_vec_into(x.as_slice(), y.as_mut_slice());
        y
    }

    pub fn mul_vec_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut s = C64::new(0.0, 0.0);
            for (c, v) in self.row(r) {
                s += v * x[c];
            }
            *out = s;
        }
    }

    /// Dense product `self * m`.
    pub fn mul_dense(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        assert_eq!(self.ncols, m.nrows());
        let mut out = DMatrix::zeros(self.nrows, m.ncols());
        // column-major: walk columns of m so each inner loop is contiguous
        for col in 0..m.ncols() {
            let src = m.column(col);
            let mut dst = out.column_mut(col);
            for r in 0..self.nrows {
                let mut s = C64::new(0.0, 0.0);
                for (c, v) in self.row(r) {
                    s += v * src[c];
                }
                dst[r] = s;
            }
        }
        out
    }

    /// Keeps the rows and columns listed in `states` (in that order).
    pub fn restrict(&self, states: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.ncols.max(self.nrows)];
        for (k, &s) in states.iter().enumerate() {
            pos[s] = k;
        }
        let mut trip = Vec::new();
        for (new_r, &r) in states.iter().enumerate() {
            for (c, v) in self.row(r) {
                let nc = pos[c];
                if nc != usize::MAX {
                    trip.push((new_r, nc, v));
                }
            }
        }
        Self::from_triplets(states.len(), states.len(), trip)
    }

    /// Largest eigenvalue of a Hermitian positive semidefinite matrix by
    /// power iteration. Used for step-size budgets, so a few percent is fine.
    pub fn spectral_radius_psd(&self, iters: usize) -> f64 {
        if self.nnz() == 0 {
            return 0.0;
        }
        let n = self.nrows;
        // deterministic, non-degenerate start vector
        let mut v = DVector::from_fn(n, |i, _| C64::new(1.0 + (i as f64 * 0.6180339887).fract(), 0.0));
        let mut lambda = 0.0;
        for _ in 0..iters {
            let nv = v.norm();
            if nv == 0.0 {
                return 0.0;
            }
            v /= C64::new(nv, 0.0);
            let w = self.mul_vec(&v);
            lambda = v.dotc(&w).re;
            v = w;
        }
        lambda.max(v.norm())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn triplets_are_canonicalized() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(1, 1, c(1.0)), (0, 1, c(2.0)), (1, 1, c(-1.0)), (0, 0, c(3.0))]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 0), c(3.0));
        assert_eq!(m.get(0, 1), c(2.0));
        assert_eq!(m.get(1, 1), c(0.0));
    }

    #[test]
    fn kron_matches_dense() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 1, c(1.0)), (1, 0, C64::new(0.0, 2.0))]);
        let b = CsrMatrix::from_triplets(2, 2, vec![(0, 0, c(1.0)), (1, 1, c(-1.0))]);
        let k = a.kron(&b).to_dense();
        let (ad, bd) = (a.to_dense(), b.to_dense());
        let expected = ad.kronecker(&bd);
        assert!(crate::linalg::max_abs(&(k - expected)) < 1e-15);
    }

    #[test]
    fn matmul_and_mul_dense_agree() {
        let a = CsrMatrix::from_triplets(3, 3, vec![(0, 1, c(1.0)), (1, 2, c(2.0)), (2, 0, C64::new(0.5, 1.0))]);
        let b = a.adjoint();
        let sp = a.matmul(&b).to_dense();
        let dn = a.mul_dense(&b.to_dense());
        assert!(crate::linalg::max_abs(&(sp - dn)) < 1e-15);
    }

    #[test]
    fn restrict_picks_block() {
        let m = CsrMatrix::from_triplets(3, 3, vec![(0, 0, c(1.0)), (0, 2, c(2.0)), (2, 2, c(3.0)), (1, 1, c(4.0))]);
        let r = m.restrict(&[0, 2]);
        assert_eq!(r.to_dense(), DMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(0.0), c(3.0)]));
    }

    #[test]
    fn power_iteration_finds_top_eigenvalue() {
        let m = CsrMatrix::from_triplets(3, 3, vec![(0, 0, c(1.0)), (1, 1, c(5.0)), (2, 2, c(2.0))]);
        assert!((m.spectral_radius_psd(200) - 5.0).abs() < 1e-6);
    }
}
