//! Sparse CSR storage with fixed patterns, faer-backed factorizations and a
//! few dense helpers shared by the reduced-order machinery.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Row-compressed sparse matrix. The pattern is reference counted so that
/// matrices assembled on one discretization share it (and its symbolic
/// factorization).
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Arc<Vec<usize>>,
    col_idx: Arc<Vec<usize>>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a zero-valued matrix from per-row column lists (sorted and
    /// deduplicated here).
    pub fn from_row_patterns(nrows: usize, ncols: usize, mut rows: Vec<Vec<usize>>) -> Self {
        assert_eq!(rows.len(), nrows);
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self {
            nrows,
            ncols,
            row_ptr: Arc::new(row_ptr),
            col_idx: Arc::new(col_idx),
            values: vec![0.0; nnz],
        }
    }

    /// Sums duplicate entries.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); nrows];
        for &(r, c, _) in triplets {
            rows[r].push(c);
        }
        let mut m = Self::from_row_patterns(nrows, ncols, rows);
        for &(r, c, v) in triplets {
            let k = m.position(r, c).expect("pattern contains triplet");
            m.values[k] += v;
        }
        m
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), &t)
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &t)
    }

    /// Same pattern, fresh values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr: Arc::clone(&self.row_ptr),
            col_idx: Arc::clone(&self.col_idx),
            values,
        }
    }

    pub fn zeroed(&self) -> Self {
        self.with_values(vec![0.0; self.values.len()])
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

    /// Number of stored entries that are numerically nonzero.
    pub fn nnz_nonzero(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn shares_pattern(&self, other: &SparseMatrix) -> bool {
        Arc::ptr_eq(&self.row_ptr, &other.row_ptr) && Arc::ptr_eq(&self.col_idx, &other.col_idx)
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[a..b].binary_search(&c).ok().map(|k| a + k)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.position(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(c, v)| v * x[*c]).sum()
            })
            .collect()
    }

    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (r, xr) in x.iter().enumerate() {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                y[*c] += v * xr;
            }
        }
        y
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.matvec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `A * B` for a dense `B`.
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.ncols);
        let mut out = DMatrix::zeros(self.nrows, b.ncols());
        for j in 0..b.ncols() {
            let col = b.column(j);
            for r in 0..self.nrows {
                let (cols, vals) = self.row(r);
                out[(r, j)] = cols.iter().zip(vals).map(|(c, v)| v * col[*c]).sum();
            }
        }
        out
    }

    /// `A^T * B` for a dense `B`.
    pub fn transpose_mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.nrows);
        let mut out = DMatrix::zeros(self.ncols, b.ncols());
        for j in 0..b.ncols() {
            for r in 0..self.nrows {
                let br = b[(r, j)];
                if br == 0.0 {
                    continue;
                }
                let (cols, vals) = self.row(r);
                for (c, v) in cols.iter().zip(vals) {
                    out[(*c, j)] += v * br;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                d[(r, *c)] += v;
            }
        }
        d
    }

    /// `D A D` with `D = diag(d)`.
    pub fn scale_sym(&self, d: &[f64]) -> Self {
        let mut out = self.clone();
        for r in 0..self.nrows {
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            for k in a..b {
                out.values[k] *= d[r] * d[self.col_idx[k]];
            }
        }
        out
    }

    /// `self + alpha * other`, patterns must coincide.
    pub fn add_scaled(&self, alpha: f64, other: &SparseMatrix) -> Self {
        assert!(self.row_ptr == other.row_ptr && self.col_idx == other.col_idx);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        self.with_values(values)
    }

    /// Row/column elimination: entries in rows or columns with `keep[i] ==
    /// false` are zeroed and their diagonal set to one.
    pub fn eliminate(&mut self, keep: &[bool]) {
        assert_eq!(self.nrows, self.ncols);
        assert_eq!(keep.len(), self.nrows);
        for r in 0..self.nrows {
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            for k in a..b {
                let c = self.col_idx[k];
                if !keep[r] || !keep[c] {
                    self.values[k] = if r == c { 1.0 } else { 0.0 };
                }
            }
        }
    }

    /// Frobenius norm of `A - A^T` relative to the Frobenius norm of `A`.
    pub fn relative_asymmetry(&self) -> f64 {
        let mut diff = 0.0;
        let mut norm = 0.0;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                let t = self.get(*c, r);
                diff += (v - t) * (v - t);
                norm += v * v;
            }
        }
        if norm == 0.0 {
            0.0
        } else {
            (diff / norm).sqrt()
        }
    }

    fn as_transposed_csc(&self) -> SparseColMatRef<'_, usize, f64> {
        // CSR arrays of A are exactly the CSC arrays of A^T.
        let sym = SymbolicSparseColMatRef::new_checked(
            self.ncols,
            self.nrows,
            &self.row_ptr,
            None,
            &self.col_idx,
        );
        SparseColMatRef::new(sym, &self.values)
    }
}

/// Holds the symbolic LU of a pattern so repeated numeric factorizations
/// (Newton iterations) skip the ordering step.
#[derive(Default)]
pub struct LuCache {
    entry: Option<(Arc<Vec<usize>>, Arc<Vec<usize>>, SymbolicLu<usize>)>,
}

impl LuCache {
    pub fn new() -> Self {
        Self::default()
    }
}

pub struct SparseLu {
    n: usize,
    // LU of A^T; solves use the transposed system.
    lu: Lu<usize, f64>,
}

impl SparseLu {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        Self::factor_cached(a, &mut LuCache::new())
    }

    pub fn factor_cached(a: &SparseMatrix, cache: &mut LuCache) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::DimensionMismatch("LU of a non-square matrix".into()));
        }
        let hit = matches!(&cache.entry, Some((rp, ci, _)) if Arc::ptr_eq(rp, &a.row_ptr) && Arc::ptr_eq(ci, &a.col_idx));
        if !hit {
            let symbolic = SymbolicLu::try_new(a.as_transposed_csc().symbolic())
                .map_err(|e| Error::SingularJacobian(format!("{e:?}")))?;
            cache.entry = Some((Arc::clone(&a.row_ptr), Arc::clone(&a.col_idx), symbolic));
        }
        let symbolic = cache.entry.as_ref().map(|e| e.2.clone()).expect("cache filled");
        let lu = Lu::try_new_with_symbolic(symbolic, a.as_transposed_csc())
            .map_err(|e| Error::SingularJacobian(format!("{e:?}")))?;
        Ok(Self { n: a.nrows, lu })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.n);
        let mut x = b.to_vec();
        self.lu
            .solve_transpose_in_place(MatMut::from_column_major_slice_mut(&mut x, self.n, 1));
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularJacobian("non-finite solution".into()));
        }
        Ok(x)
    }
}

/// Sparse Cholesky of a symmetric matrix; fails with
/// [`Error::IndefiniteGram`] when the matrix is not positive definite.
pub struct SparseCholesky {
    n: usize,
    llt: Llt<usize, f64>,
}

impl SparseCholesky {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        let csc = a.as_transposed_csc();
        let symbolic =
            SymbolicLlt::try_new(csc.symbolic(), Side::Lower).map_err(|_| Error::IndefiniteGram)?;
        let llt = Llt::try_new_with_symbolic(symbolic, csc, Side::Lower)
            .map_err(|_| Error::IndefiniteGram)?;
        Ok(Self { n: a.nrows, llt })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.llt
            .solve_in_place(MatMut::from_column_major_slice_mut(&mut x, self.n, 1));
        x
    }

    pub fn solve_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        let (r, c) = (out.nrows(), out.ncols());
        self.llt
            .solve_in_place(MatMut::from_column_major_slice_mut(out.as_mut_slice(), r, c));
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Inner product `x^T G y` with a dense Gram matrix.
pub fn gram_inner(g: &SparseMatrix, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    g.bilinear(x.as_slice(), y.as_slice())
}

/// Modified Gram-Schmidt of `candidates` against the orthonormal columns of
/// `basis` and among themselves, in the inner product induced by `gram`.
/// Candidates whose remaining norm falls below `tol` times their original
/// norm are dropped. Returns the new orthonormal columns.
pub fn orthonormalize_against(
    gram: &SparseMatrix,
    basis: &DMatrix<f64>,
    candidates: &DMatrix<f64>,
    tol: f64,
) -> DMatrix<f64> {
    let mut accepted: Vec<DVector<f64>> = Vec::new();
    let existing: Vec<DVector<f64>> = basis.column_iter().map(|c| c.into_owned()).collect();
    for cand in candidates.column_iter() {
        let mut v = cand.into_owned();
        let norm0 = gram_inner(gram, &v, &v).max(0.0).sqrt();
        if norm0 == 0.0 {
            continue;
        }
        // two passes for stability
        for _ in 0..2 {
            for q in existing.iter().chain(accepted.iter()) {
                let c = gram_inner(gram, q, &v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = gram_inner(gram, &v, &v).max(0.0).sqrt();
        if norm > tol * norm0 {
            accepted.push(v / norm);
        }
    }
    if accepted.is_empty() {
        DMatrix::zeros(basis.nrows(), 0)
    } else {
        DMatrix::from_columns(&accepted)
    }
}

/// Symmetric eigen-decomposition sorted by descending eigenvalue.
pub fn sym_eigen_desc(k: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = nalgebra::SymmetricEigen::new(k.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|a, b| {
        eig.eigenvalues[*b]
            .partial_cmp(&eig.eigenvalues[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|i| eig.eigenvalues[*i]).collect();
    let vectors = DMatrix::from_fn(k.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -2.0));
            }
        }
        SparseMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn lu_solves_nonsymmetric_system() {
        let a = tridiag(7);
        let x_true: Vec<f64> = (0..7).map(|i| (i as f64).sin()).collect();
        let b = a.matvec(&x_true);
        let x = SparseLu::factor(&a).unwrap().solve(&b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn cached_symbolic_factorization_is_reused() {
        let a = tridiag(5);
        let mut cache = LuCache::new();
        let b = a.with_values(a.values().iter().map(|v| 2.0 * v).collect());
        let x1 = SparseLu::factor_cached(&a, &mut cache).unwrap().solve(&[1.0; 5]).unwrap();
        let x2 = SparseLu::factor_cached(&b, &mut cache).unwrap().solve(&[1.0; 5]).unwrap();
        for (u, v) in x1.iter().zip(&x2) {
            assert!((u - 2.0 * v).abs() < 1e-14);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, -1.0)]);
        assert!(matches!(SparseCholesky::factor(&a), Err(Error::IndefiniteGram)));
    }

    #[test]
    fn elimination_keeps_identity_rows() {
        let mut a = tridiag(4);
        a.eliminate(&[true, false, true, true]);
        let d = a.to_dense();
        assert_eq!(d[(1, 1)], 1.0);
        assert_eq!(d[(0, 1)], 0.0);
        assert_eq!(d[(1, 0)], 0.0);
        assert_eq!(d[(2, 1)], 0.0);
        assert_eq!(d[(2, 3)], -1.0);
    }

    #[test]
    fn mgs_produces_orthonormal_columns() {
        let g = SparseMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (1, 1, 1.0), (2, 2, 3.0), (0, 1, 0.5), (1, 0, 0.5)]);
        let cands = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0]);
        let q = orthonormalize_against(&g, &DMatrix::zeros(3, 0), &cands, 1e-12);
        assert_eq!(q.ncols(), 3);
        let gq = g.mul_dense(&q);
        let m = q.transpose() * gq;
        assert!((m - DMatrix::identity(3, 3)).norm() < 1e-12);
    }
}
