//! Compressed sparse row matrices and the direct factorizations used by the
//! coarse, local and corrector solvers.
//!
//! Factorizations are delegated to `faer`: sparse LU with partial pivoting
//! for the complex symmetric (non-Hermitian) systems, sparse Cholesky for the
//! real SPD energy and mass matrices, dense LU for small coarse systems.

use std::ops::{AddAssign, Mul};

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, MatMut, Side};
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::C64;

/// Scalar types stored in a [`CsrMatrix`].
pub trait Scalar: Copy + Zero + AddAssign + Mul<Output = Self> + Send + Sync + 'static {
    fn one() -> Self;
    fn to_complex(self) -> C64;
}

impl Scalar for f64 {
    fn one() -> Self {
        1.0
    }

    #[inline]
    fn to_complex(self) -> C64 {
        C64::new(self, 0.0)
    }
}

impl Scalar for C64 {
    fn one() -> Self {
        C64::new(1.0, 0.0)
    }

    #[inline]
    fn to_complex(self) -> C64 {
        self
    }
}

/// Row-compressed sparse matrix. Column indices within a row are sorted and
/// unique.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![T::zero(); triplets.len()];
        for &(i, j, v) in triplets {
            let k = next[i];
            cols[k] = j;
            vals[k] = v;
            next[i] += 1;
        }

        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for i in 0..nrows {
            let (lo, hi) = (counts[i], counts[i + 1]);
            order.clear();
            order.extend(lo..hi);
            order.sort_unstable_by_key(|&k| cols[k]);
            let mut last = usize::MAX;
            for &k in &order {
                if cols[k] == last {
                    *values.last_mut().unwrap() += vals[k];
                } else {
                    col_idx.push(cols[k]);
                    values.push(vals[k]);
                    last = cols[k];
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
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

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Entry `(i, j)`, zero when outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    /// `y = self * x` for any vector type the entries can scale.
    pub fn mul_vec<V>(&self, x: &[V], y: &mut [V])
    where
        V: Copy + Zero + AddAssign + Mul<T, Output = V>,
    {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let mut acc = V::zero();
            for (&j, &a) in cols.iter().zip(vals) {
                acc += x[j] * a;
            }
            *yi = acc;
        }
    }

    pub fn apply<V>(&self, x: &[V]) -> Vec<V>
    where
        V: Copy + Zero + AddAssign + Mul<T, Output = V>,
    {
        let mut y = vec![V::zero(); self.nrows];
        self.mul_vec(x, &mut y);
        y
    }

    /// `y = selfᵀ * x` without forming the transpose.
    pub fn mul_transpose_vec<V>(&self, x: &[V], y: &mut [V])
    where
        V: Copy + Zero + AddAssign + Mul<T, Output = V>,
    {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        y.iter_mut().for_each(|v| *v = V::zero());
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                y[j] += xi * a;
            }
        }
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    /// Principal submatrix on a sorted index set.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Self {
        self.submatrix(idx, idx)
    }

    /// Submatrix with the given sorted row and column index sets.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        debug_assert!(rows.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(cols.windows(2).all(|w| w[0] < w[1]));
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &i in rows {
            let (rc, rv) = self.row(i);
            for (&j, &v) in rc.iter().zip(rv) {
                if let Ok(lj) = cols.binary_search(&j) {
                    col_idx.push(lj);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: rows.len(),
            ncols: cols.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut acc = vec![T::zero(); other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut touched = Vec::new();
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..self.nrows {
            touched.clear();
            let (ac, av) = self.row(i);
            for (&k, &a) in ac.iter().zip(av) {
                let (bc, bv) = other.row(k);
                for (&j, &b) in bc.iter().zip(bv) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = T::zero();
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_idx.push(j);
                values.push(acc[j]);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: self.nrows,
            ncols: other.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> CsrMatrix<U> {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn to_complex(&self) -> CsrMatrix<C64> {
        self.map(Scalar::to_complex)
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }

    fn to_faer(&self) -> SparseColMat<usize, T>
    where
        T: faer::traits::ComplexField,
    {
        let t: Vec<_> = self
            .triplets()
            .map(|(i, j, v)| Triplet::new(i, j, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .expect("triplets are in bounds")
    }
}

impl CsrMatrix<C64> {
    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    /// `Σ coeff_k · M_k` for real matrices, merged on the union pattern.
    pub fn combine(parts: &[(C64, &CsrMatrix<f64>)]) -> Self {
        let (nrows, ncols) = (parts[0].1.nrows, parts[0].1.ncols);
        let mut t = Vec::with_capacity(parts.iter().map(|(_, m)| m.nnz()).sum());
        for (c, m) in parts {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols));
            t.extend(m.triplets().map(|(i, j, v)| (i, j, *c * v)));
        }
        Self::from_triplets(nrows, ncols, &t)
    }
}

impl CsrMatrix<f64> {
    pub fn combine_real(parts: &[(f64, &CsrMatrix<f64>)]) -> Self {
        let (nrows, ncols) = (parts[0].1.nrows, parts[0].1.ncols);
        let mut t = Vec::new();
        for (c, m) in parts {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols));
            t.extend(m.triplets().map(|(i, j, v)| (i, j, *c * v)));
        }
        Self::from_triplets(nrows, ncols, &t)
    }
}

/// Relative residual of a trial solve used to reject numerically singular
/// factorizations, which `faer` does not report on its own.
const SINGULAR_PROBE_TOL: f64 = 1e-6;

fn probe_vector(n: usize) -> Vec<C64> {
    (0..n)
        .map(|i| {
            let t = i as f64;
            C64::new(1.0 + 0.5 * (0.37 * t).sin(), 0.25 * (0.71 * t).cos())
        })
        .collect()
}

fn rel_diff(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Sparse LU factorization of a complex square matrix.
pub struct SparseLu {
    n: usize,
    lu: Lu<usize, C64>,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLu").field("n", &self.n).finish()
    }
}

impl SparseLu {
    /// Factorizes `a`. A probe solve detects numerically singular matrices;
    /// `what`/`id` label the resulting error.
    pub fn factor(a: &CsrMatrix<C64>, what: &'static str, id: usize) -> Result<Self> {
        assert_eq!(a.nrows, a.ncols);
        let n = a.nrows;
        let lu = a.to_faer().sp_lu().map_err(|e| Error::Singular {
            what,
            id,
            detail: e.to_string(),
        })?;
        let this = Self { n, lu };
        let exact = probe_vector(n);
        let mut x = a.apply(&exact);
        this.solve_in_place(&mut x);
        let err = rel_diff(&x, &exact);
        if !err.is_finite() || err > SINGULAR_PROBE_TOL {
            return Err(Error::Singular {
                what,
                id,
                detail: format!("probe solve relative error {err:.3e}"),
            });
        }
        Ok(this)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [C64]) {
        self.solve_many_in_place(b, 1, Conj::No);
    }

    /// Solves `conj(A) x = b` in place.
    pub fn solve_conj_in_place(&self, b: &mut [C64]) {
        self.solve_many_in_place(b, 1, Conj::Yes);
    }

    /// Solves `Aᴴ x = b` in place.
    pub fn solve_adjoint_in_place(&self, b: &mut [C64]) {
        let rhs = MatMut::from_column_major_slice_mut(b, self.n, 1);
        self.lu.solve_transpose_in_place_with_conj(Conj::Yes, rhs);
    }

    /// Solves for `ncols` right-hand sides stored column-major in `b`.
    pub fn solve_many_in_place(&self, b: &mut [C64], ncols: usize, conj: Conj) {
        let rhs = MatMut::from_column_major_slice_mut(b, self.n, ncols);
        self.lu.solve_in_place_with_conj(conj, rhs);
    }
}

/// Sparse Cholesky factorization of a real SPD matrix, applied to complex
/// vectors by solving for real and imaginary parts.
pub struct Cholesky {
    n: usize,
    llt: Llt<usize, f64>,
}

impl std::fmt::Debug for Cholesky {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cholesky").field("n", &self.n).finish()
    }
}

impl Cholesky {
    pub fn factor(a: &CsrMatrix<f64>, what: &'static str) -> Result<Self> {
        assert_eq!(a.nrows, a.ncols);
        let llt = a
            .to_faer()
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Singular {
                what,
                id: 0,
                detail: e.to_string(),
            })?;
        Ok(Self { n: a.nrows, llt })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_real_in_place(&self, b: &mut [f64]) {
        let rhs = MatMut::from_column_major_slice_mut(b, self.n, 1);
        self.llt.solve_in_place_with_conj(Conj::No, rhs);
    }

    pub fn solve_in_place(&self, b: &mut [C64]) {
        let n = self.n;
        let mut split = vec![0.0; 2 * n];
        for (i, v) in b.iter().enumerate() {
            split[i] = v.re;
            split[n + i] = v.im;
        }
        let rhs = MatMut::from_column_major_slice_mut(&mut split, n, 2);
        self.llt.solve_in_place_with_conj(Conj::No, rhs);
        for (i, v) in b.iter_mut().enumerate() {
            *v = C64::new(split[i], split[n + i]);
        }
    }
}

/// Dense LU with partial pivoting.
pub struct DenseLu {
    n: usize,
    lu: faer::linalg::solvers::PartialPivLu<C64>,
}

impl std::fmt::Debug for DenseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DenseLu").field("n", &self.n).finish()
    }
}

impl DenseLu {
    /// Factorizes the dense matrix given as a closure over entries.
    pub fn factor(
        n: usize,
        entry: impl Fn(usize, usize) -> C64,
        what: &'static str,
        id: usize,
    ) -> Result<Self> {
        let mat = Mat::<C64>::from_fn(n, n, &entry);
        let lu = mat.partial_piv_lu();
        let this = Self { n, lu };
        let exact = probe_vector(n);
        let mut x: Vec<C64> = (0..n)
            .map(|i| (0..n).map(|j| mat[(i, j)] * exact[j]).sum())
            .collect();
        this.solve_in_place(&mut x);
        let err = rel_diff(&x, &exact);
        if !err.is_finite() || err > SINGULAR_PROBE_TOL {
            return Err(Error::Singular {
                what,
                id,
                detail: format!("probe solve relative error {err:.3e}"),
            });
        }
        Ok(this)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [C64]) {
        let rhs = MatMut::from_column_major_slice_mut(b, self.n, 1);
        self.lu.solve_in_place_with_conj(Conj::No, rhs);
    }

    pub fn solve_adjoint_in_place(&self, b: &mut [C64]) {
        let rhs = MatMut::from_column_major_slice_mut(b, self.n, 1);
        self.lu.solve_transpose_in_place_with_conj(Conj::Yes, rhs);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn triplets_merge_duplicates_and_sort() {
        let m =
            CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 3.0), (1, 1, 5.0)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.row(0).0, &[0, 2]);
        assert_eq!(m.get(0, 2), 4.0);
        assert_eq!(m.get(1, 0), 0.0);
    }

    #[test]
    fn transpose_product_matches_explicit_transpose() {
        let m =
            CsrMatrix::from_triplets(3, 2, &[(0, 0, 1.0), (1, 1, 2.0), (2, 0, -1.0), (2, 1, 4.0)]);
        let x = [c(1.0, 2.0), c(0.0, -1.0), c(3.0, 0.5)];
        let mut y1 = vec![C64::zero(); 2];
        m.mul_transpose_vec(&x, &mut y1);
        let y2 = m.transpose().apply(&x);
        assert_eq!(y1, y2);
    }

    #[test]
    fn submatrix_extracts_local_block() {
        let m = CsrMatrix::from_triplets(
            4,
            4,
            &[
                (0, 0, 1.0),
                (1, 1, 2.0),
                (1, 3, 7.0),
                (3, 1, 7.0),
                (3, 3, 4.0),
                (2, 2, 3.0),
            ],
        );
        let s = m.principal_submatrix(&[1, 3]);
        assert_eq!(s.to_dense(), vec![vec![2.0, 7.0], vec![7.0, 4.0]]);
        assert_eq!(CsrMatrix::<f64>::identity(3).get(2, 2), 1.0);
    }

    #[test]
    fn sparse_lu_solves_plain_conj_and_adjoint() {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, c(4.0, 1.0)),
                (0, 1, c(1.0, -2.0)),
                (1, 0, c(0.5, 0.0)),
                (1, 1, c(3.0, 0.0)),
                (1, 2, c(0.0, 1.0)),
                (2, 2, c(2.0, -1.0)),
            ],
        );
        let lu = SparseLu::factor(&a, "test", 0).unwrap();
        let x = vec![c(1.0, 1.0), c(-2.0, 0.5), c(0.0, 3.0)];

        let mut b = a.apply(&x);
        lu.solve_in_place(&mut b);
        assert!(rel_diff(&b, &x) < 1e-14);

        let mut b = a.conj().apply(&x);
        lu.solve_conj_in_place(&mut b);
        assert!(rel_diff(&b, &x) < 1e-14);

        let mut b = a.transpose().conj().apply(&x);
        lu.solve_adjoint_in_place(&mut b);
        assert!(rel_diff(&b, &x) < 1e-14);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = CsrMatrix::from_triplets(
            2,
            2,
            &[
                (0, 0, c(1.0, 0.0)),
                (0, 1, c(2.0, 0.0)),
                (1, 0, c(2.0, 0.0)),
                (1, 1, c(4.0, 0.0)),
            ],
        );
        assert!(matches!(
            SparseLu::factor(&a, "block", 7),
            Err(Error::Singular { id: 7, .. })
        ));
        assert!(DenseLu::factor(2, |i, j| a.get(i, j), "block", 3).is_err());
    }

    #[test]
    fn cholesky_solves_complex_rhs() {
        let a =
            CsrMatrix::from_triplets(2, 2, &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)]);
        let llt = Cholesky::factor(&a, "spd").unwrap();
        let x = vec![c(1.0, -1.0), c(2.0, 0.5)];
        let mut b = a.apply(&x);
        llt.solve_in_place(&mut b);
        assert!(rel_diff(&b, &x) < 1e-14);
    }

    #[test]
    fn dense_lu_adjoint_solve() {
        let m = [[c(2.0, 1.0), c(0.0, 1.0)], [c(1.0, 0.0), c(3.0, -2.0)]];
        let lu = DenseLu::factor(2, |i, j| m[i][j], "dense", 0).unwrap();
        let x = vec![c(1.0, 2.0), c(-1.0, 0.0)];
        let mut b: Vec<C64> = (0..2)
            .map(|i| (0..2).map(|j| m[j][i].conj() * x[j]).sum())
            .collect();
        lu.solve_adjoint_in_place(&mut b);
        assert!(rel_diff(&b, &x) < 1e-14);
    }
}
