//! Compressed sparse row matrices over real or complex scalars, and the
//! factorizations the eigensolvers need.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use faer::sparse::{SparseColMat, Triplet};
use faer::traits::ComplexField;
use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Field scalar usable by the assemblers and eigensolvers.
pub trait Scalar:
    ComplexField
    + Copy
    + Debug
    + Default
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    const IS_COMPLEX: bool;
    fn from_f64(x: f64) -> Self;
    fn conjugate(self) -> Self;
    fn real_part(self) -> f64;
    fn imag_part(self) -> f64;
    fn modulus_sqr(self) -> f64;
    fn scaled(self, s: f64) -> Self;
}

impl Scalar for f64 {
    const IS_COMPLEX: bool = false;
    fn from_f64(x: f64) -> Self {
        x
    }
    fn conjugate(self) -> Self {
        self
    }
    fn real_part(self) -> f64 {
        self
    }
    fn imag_part(self) -> f64 {
        0.0
    }
    fn modulus_sqr(self) -> f64 {
        self * self
    }
    fn scaled(self, s: f64) -> Self {
        self * s
    }
}

impl Scalar for Complex64 {
    const IS_COMPLEX: bool = true;
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conjugate(self) -> Self {
        self.conj()
    }
    fn real_part(self) -> f64 {
        self.re
    }
    fn imag_part(self) -> f64 {
        self.im
    }
    fn modulus_sqr(self) -> f64 {
        self.norm_sqr()
    }
    fn scaled(self, s: f64) -> Self {
        self * s
    }
}

/// `Σ conj(x_i) y_i`.
pub fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::default(), |acc, (a, b)| acc + a.conjugate() * *b)
}

pub fn norm<T: Scalar>(x: &[T]) -> f64 {
    x.iter().map(|v| v.modulus_sqr()).sum::<f64>().sqrt()
}

/// Accumulates `(row, col, value)` entries; duplicates are summed.
#[derive(Debug, Clone)]
pub struct TripletBuilder<T> {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Scalar> TripletBuilder<T> {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, capacity: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.entries.push((row, col, value));
    }

    pub fn build(mut self) -> Csr<T> {
        self.entries.sort_unstable_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0usize; self.n_rows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(self.entries.len());
        let mut values: Vec<T> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Csr {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Csr<T> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Scalar> Csr<T> {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => T::default(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = T::default();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::default(); self.n_rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `x^H A x` for Hermitian `A`, returned as a real number.
    pub fn quadratic_form(&self, x: &[T]) -> f64 {
        dot(x, &self.mul_vec(x)).real_part()
    }

    /// `α A + β B` for matrices of equal shape.
    pub fn linear_combination(&self, alpha: T, other: &Csr<T>, beta: T) -> Csr<T> {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let mut b = TripletBuilder::with_capacity(self.n_rows, self.n_cols, self.nnz() + other.nnz());
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                b.push(r, c, alpha * v);
            }
            for (c, v) in other.row(r) {
                b.push(r, c, beta * v);
            }
        }
        b.build()
    }

    /// Largest `|A_ij - conj(A_ji)|` relative to the largest entry.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.values.iter().map(|v| v.modulus_sqr()).fold(0.0, f64::max).sqrt();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r).conjugate()).modulus_sqr().sqrt());
            }
        }
        worst / scale
    }

    /// `Pᵀ A P` for a sparse, column-wise map `P` given as
    /// `reduce[i] = [(j, w), ...]` meaning full dof `i = Σ w · reduced dof j`.
    /// The conjugate transpose is used on the left.
    pub fn project(&self, reduce: &[Vec<(usize, T)>], n_reduced: usize) -> Csr<T> {
        let mut b = TripletBuilder::with_capacity(n_reduced, n_reduced, self.nnz());
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                for &(rr, wr) in &reduce[r] {
                    for &(cc, wc) in &reduce[c] {
                        b.push(rr, cc, wr.conjugate() * v * wc);
                    }
                }
            }
        }
        b.build()
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, T>> {
        let triplets: Vec<Triplet<usize, usize, T>> = (0..self.n_rows)
            .flat_map(|r| self.row(r).map(move |(c, v)| Triplet::new(r, c, v)))
            .collect();
        SparseColMat::try_new_from_triplets(self.n_rows, self.n_cols, &triplets)
            .map_err(|e| Error::Singular(format!("cannot build sparse matrix: {e:?}")))
    }
}

enum Factor<T: Scalar> {
    Cholesky(faer::sparse::linalg::solvers::Llt<usize, T>),
    Lu(faer::sparse::linalg::solvers::Lu<usize, T>),
}

/// Factorization of a square sparse matrix, reusable for many solves.
pub struct Factorization<T: Scalar> {
    n: usize,
    factor: Factor<T>,
}

impl<T: Scalar> Factorization<T> {
    /// Cholesky for Hermitian positive definite input, LU otherwise.
    pub fn new(a: &Csr<T>, hermitian_definite: bool) -> Result<Self> {
        if a.n_rows != a.n_cols {
            return Err(Error::Singular("factorization of a non-square matrix".into()));
        }
        let mat = a.to_faer()?;
        if hermitian_definite {
            if let Ok(llt) = mat.sp_cholesky(Side::Lower) {
                return Ok(Self {
                    n: a.n_rows,
                    factor: Factor::Cholesky(llt),
                });
            }
            log::debug!("Cholesky failed, falling back to LU");
        }
        let lu = mat
            .sp_lu()
            .map_err(|e| Error::Singular(format!("sparse LU failed: {e:?}")))?;
        Ok(Self {
            n: a.n_rows,
            factor: Factor::Lu(lu),
        })
    }

    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        use faer::linalg::solvers::Solve;
        assert_eq!(rhs.len(), self.n);
        let mut x = Mat::<T>::from_fn(self.n, 1, |i, _| rhs[i]);
        match &self.factor {
            Factor::Cholesky(f) => f.solve_in_place(x.as_mut()),
            Factor::Lu(f) => f.solve_in_place(x.as_mut()),
        }
        let out: Vec<T> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.real_part().is_finite() || !v.imag_part().is_finite()) {
            return Err(Error::Singular("solve produced non-finite values".into()));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn laplacian_1d(n: usize) -> Csr<f64> {
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 2.0);
            if i + 1 < n {
                b.push(i, i + 1, -1.0);
                b.push(i + 1, i, -1.0);
            }
        }
        b.build()
    }

    #[test]
    fn duplicates_summed() {
        let mut b = TripletBuilder::new(2, 2);
        b.push(0, 0, 1.0);
        b.push(0, 0, 2.5);
        b.push(1, 0, -1.0);
        let a = b.build();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 0), 3.5);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.mul_vec(&[1.0, 2.0]), vec![3.5, -1.0]);
    }

    #[test]
    fn solves_real_spd_and_indefinite() {
        let a = laplacian_1d(50);
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let rhs = a.mul_vec(&x);
        for definite in [true, false] {
            let sol = Factorization::new(&a, definite).unwrap().solve(&rhs).unwrap();
            for (p, q) in sol.iter().zip(&x) {
                assert_relative_eq!(p, q, epsilon = 1e-10);
            }
        }
        let shifted = a.linear_combination(1.0, &laplacian_1d(50), -0.9);
        assert_relative_eq!(shifted.get(0, 0), 0.2, epsilon = 1e-14);
    }

    #[test]
    fn solves_complex_hermitian() {
        let n = 6;
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, Complex64::new(3.0, 0.0));
            let j = (i + 1) % n;
            b.push(i, j, Complex64::new(-1.0, 0.5));
            b.push(j, i, Complex64::new(-1.0, -0.5));
        }
        let a = b.build();
        assert!(a.hermitian_defect() < 1e-15);
        let x: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let rhs = a.mul_vec(&x);
        let sol = Factorization::new(&a, true).unwrap().solve(&rhs).unwrap();
        for (p, q) in sol.iter().zip(&x) {
            assert!((p - q).norm() < 1e-12);
        }
    }
}
