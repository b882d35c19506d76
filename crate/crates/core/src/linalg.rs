//! Sparse matrices, conjugate gradients and third-order tensors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RomError};
use crate::scalar::Real;

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct Csr<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> Csr<T> {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cursor = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![T::zero(); triplets.len()];
        for &(r, c, v) in triplets {
            cols[cursor[r]] = c;
            vals[cursor[r]] = v;
            cursor[r] += 1;
        }

        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row: Vec<(usize, T)> = Vec::new();
        for r in 0..nrows {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|p| (cols[p], vals[p])));
            row.sort_by_key(|e| e.0);
            let mut iter = row.iter().copied();
            if let Some((mut c, mut acc)) = iter.next() {
                for (c2, v2) in iter {
                    if c2 == c {
                        acc += v2;
                    } else {
                        indices.push(c);
                        values.push(acc);
                        c = c2;
                        acc = v2;
                    }
                }
                indices.push(c);
                values.push(acc);
            }
            indptr.push(indices.len());
        }
        Csr {
            nrows,
            ncols,
            indptr,
            indices,
            values,
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

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |p| (self.indices[p], self.values[p]))
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for p in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[p] * x[self.indices[p]];
            }
            *out = acc;
        }
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.mul_vec(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                triplets.push((c, r, v));
            }
        }
        Csr::from_triplets(self.ncols, self.nrows, &triplets)
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &Csr<T>) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut triplets = Vec::new();
        let mut acc = vec![T::zero(); other.ncols];
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
                triplets.push((r, c, acc[c]));
                acc[c] = T::zero();
                mark[c] = false;
            }
            touched.clear();
        }
        Csr::from_triplets(self.nrows, other.ncols, &triplets)
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols))
            .map(|r| {
                self.row(r)
                    .find(|&(c, _)| c == r)
                    .map(|(_, v)| v)
                    .unwrap_or_else(T::zero)
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }
}

/// Stopping rule for [`conjugate_gradient`].
#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            rel_tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// (semi-)definite matrix. `x` holds the initial guess on entry.
///
/// With `remove_mean`, the constant vector is treated as the null space: the
/// right-hand side must be orthogonal to it and iterates are kept zero-mean.
pub fn conjugate_gradient<T: Real>(
    a: &Csr<T>,
    b: &[T],
    x: &mut [T],
    opts: CgOptions,
    remove_mean: bool,
) -> Result<CgReport> {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(CgReport {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let tol = T::tol(opts.rel_tol) * bnorm;
    let inv_diag: Vec<T> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > T::zero() { T::one() / d } else { T::one() })
        .collect();

    if remove_mean {
        subtract_mean(x);
    }
    let mut r = vec![T::zero(); n];
    a.mul_vec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if remove_mean {
        subtract_mean(&mut r);
    }
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    if remove_mean {
        subtract_mean(&mut z);
    }
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let mut rnorm = norm2(&r);
    let mut it = 0;
    while rnorm > tol {
        if it >= opts.max_iter {
            return Err(RomError::NotConverged {
                iterations: it,
                residual: (rnorm / bnorm).to_f64_lossy(),
            });
        }
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(RomError::NotConverged {
                iterations: it,
                residual: (rnorm / bnorm).to_f64_lossy(),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if remove_mean {
            subtract_mean(&mut r);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        if remove_mean {
            subtract_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rnorm = norm2(&r);
        it += 1;
    }
    if remove_mean {
        subtract_mean(x);
    }
    // recursive residuals drift; confirm with the true residual
    a.mul_vec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if remove_mean {
        subtract_mean(&mut r);
    }
    let true_res = norm2(&r) / bnorm;
    if true_res > T::lit(10.0) * tol / bnorm {
        return Err(RomError::NotConverged {
            iterations: it,
            residual: true_res.to_f64_lossy(),
        });
    }
    Ok(CgReport {
        iterations: it,
        relative_residual: true_res.to_f64_lossy(),
    })
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn subtract_mean<T: Real>(v: &mut [T]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().fold(T::zero(), |a, &b| a + b) / T::from_usize(v.len()).unwrap();
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Dense third-order tensor `T[i][j][k]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    dims: [usize; 3],
    data: Vec<T>,
}

impl<T: Real> Tensor3<T> {
    pub fn zeros(n0: usize, n1: usize, n2: usize) -> Self {
        Tensor3 {
            dims: [n0, n1, n2],
            data: vec![T::zero(); n0 * n1 * n2],
        }
    }

    pub fn from_fn(n0: usize, n1: usize, n2: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut t = Self::zeros(n0, n1, n2);
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    t.data[(i * n1 + j) * n2 + k] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[(i * self.dims[1] + j) * self.dims[2] + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: T) {
        let idx = (i * self.dims[1] + j) * self.dims[2] + k;
        self.data[idx] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// `out_i = Σ_jk T_ijk a_j b_k`
    pub fn contract(&self, a: &[T], b: &[T]) -> DVector<T> {
        let [n0, n1, n2] = self.dims;
        assert!(a.len() >= n1 && b.len() >= n2);
        DVector::from_fn(n0, |i, _| {
            let mut acc = T::zero();
            for j in 0..n1 {
                let aj = a[j];
                if aj == T::zero() {
                    continue;
                }
                let base = (i * n1 + j) * n2;
                let mut inner = T::zero();
                for k in 0..n2 {
                    inner += self.data[base + k] * b[k];
                }
                acc += aj * inner;
            }
            acc
        })
    }

    /// Jacobian of `a ↦ contract(a, a)`: `J_im = Σ_k (T_imk + T_ikm) a_k`.
    pub fn quadratic_jacobian(&self, a: &[T]) -> DMatrix<T> {
        let [n0, n1, n2] = self.dims;
        assert_eq!(n1, n2, "quadratic form needs a square tensor slice");
        DMatrix::from_fn(n0, n1, |i, m| {
            let mut acc = T::zero();
            for k in 0..n2 {
                acc += (self.get(i, m, k) + self.get(i, k, m)) * a[k];
            }
            acc
        })
    }

    /// Leading sub-block `[0..n0, 0..n1, 0..n2]`.
    pub fn leading(&self, n0: usize, n1: usize, n2: usize) -> Self {
        assert!(n0 <= self.dims[0] && n1 <= self.dims[1] && n2 <= self.dims[2]);
        Self::from_fn(n0, n1, n2, |i, j, k| self.get(i, j, k))
    }

    /// Flattens to an `n0 × (n1·n2)` matrix.
    pub fn to_matrix(&self) -> DMatrix<T> {
        let [n0, n1, n2] = self.dims;
        DMatrix::from_row_slice(n0, n1 * n2, &self.data)
    }

    pub fn from_matrix(m: &DMatrix<T>, n1: usize, n2: usize) -> Result<Self> {
        if m.ncols() != n1 * n2 {
            return Err(RomError::shape("tensor reshape", n1 * n2, m.ncols()));
        }
        let n0 = m.nrows();
        Ok(Self::from_fn(n0, n1, n2, |i, j, k| m[(i, j * n2 + k)]))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
