//! Shift-invert Krylov–Schur solver for sparse Hermitian generalized
//! eigenproblems `K x = λ M x` with `M` positive definite.
//!
//! The operator `(K - σM)⁻¹ M` is self-adjoint in the `M` inner product, so
//! the projected matrix is Hermitian and its Ritz values `θ` map back through
//! `λ = σ + 1/θ`. Eigenvalues nearest the shift converge first. Exactly
//! degenerate eigenvalues are caught by a deflated verification pass, since a
//! single Krylov sequence only sees one vector per eigenspace.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::{dot, Csr, Factorization, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Spectral shift σ, in the units of `λ`.
    pub shift: f64,
    /// Number of eigenpairs nearest the shift.
    pub n_wanted: usize,
    /// Krylov basis size; 0 picks `max(2·n_wanted, n_wanted + 20)`.
    pub max_basis: usize,
    /// Ritz convergence tolerance relative to `|θ|`.
    pub ritz_tol: f64,
    /// Acceptance threshold for the true relative residual.
    pub residual_tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
}

impl EigenOptions {
    pub fn new(shift: f64, n_wanted: usize) -> Self {
        Self {
            shift,
            n_wanted,
            max_basis: 0,
            ritz_tol: 1e-11,
            residual_tol: 1e-8,
            max_restarts: 300,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair<T> {
    pub value: f64,
    /// `M`-normalized eigenvector.
    pub vector: Vec<T>,
    /// `‖Kx − λMx‖ / (‖Kx‖ + (|λ| + |σ|)‖Mx‖)`; the shift term keeps the
    /// measure meaningful for eigenvalues at zero.
    pub residual: f64,
}

/// Operator applications and restarts spent, for diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EigenStats {
    pub operator_applications: usize,
    pub restarts: usize,
}

/// Shift-inverted pencil with a reusable factorization of `K - σM`.
pub struct ShiftInvert<'a, T: Scalar> {
    k: &'a Csr<T>,
    m: &'a Csr<T>,
    shift: f64,
    factor: Factorization<T>,
}

impl<'a, T: Scalar> ShiftInvert<'a, T> {
    /// `definite` promises that `K - σM` is positive definite, which allows a
    /// Cholesky factorization.
    pub fn new(k: &'a Csr<T>, m: &'a Csr<T>, shift: f64, definite: bool) -> Result<Self> {
        if k.n_rows != k.n_cols || m.n_rows != m.n_cols || k.n_rows != m.n_rows {
            return Err(Error::Singular("stiffness and mass shapes differ".into()));
        }
        let shifted = k.linear_combination(T::from_f64(1.0), m, T::from_f64(-shift));
        let factor = Factorization::new(&shifted, definite)?;
        Ok(Self { k, m, shift, factor })
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    fn apply(&self, v: &[T]) -> Result<Vec<T>> {
        self.factor.solve(&self.m.mul_vec(v))
    }

    /// Eigenpairs nearest the shift, sorted by ascending eigenvalue.
    pub fn nearest(&self, n_wanted: usize, opts: &EigenOptions) -> Result<(Vec<EigenPair<T>>, EigenStats)> {
        let n = self.k.n_rows;
        let n_wanted = n_wanted.min(n);
        let mut stats = EigenStats::default();
        if n_wanted == 0 {
            return Ok((Vec::new(), stats));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let (mut thetas, mut vectors) = self.krylov_schur(n_wanted, &[], opts, &mut rng, &mut stats)?;

        // Verification passes: look for eigenvectors outside the span found so
        // far that are nearer to the shift than the current farthest pair.
        loop {
            if vectors.len() >= n {
                break;
            }
            let probe = n_wanted.min(n - vectors.len()).min(4);
            let (extra_t, extra_v) = self.krylov_schur(probe, &vectors, opts, &mut rng, &mut stats)?;
            let cutoff = thetas.iter().map(|t: &f64| t.abs()).fold(f64::INFINITY, f64::min);
            let mut added = false;
            for (t, v) in extra_t.into_iter().zip(extra_v) {
                if t.abs() > cutoff * (1.0 + 1e-12) {
                    thetas.push(t);
                    vectors.push(v);
                    added = true;
                }
            }
            if !added {
                break;
            }
            let mut order: Vec<usize> = (0..thetas.len()).collect();
            order.sort_by(|&a, &b| thetas[b].abs().total_cmp(&thetas[a].abs()));
            order.truncate(n_wanted);
            thetas = order.iter().map(|&i| thetas[i]).collect();
            vectors = order.iter().map(|&i| vectors[i].clone()).collect();
        }

        let mut pairs: Vec<EigenPair<T>> = thetas
            .into_iter()
            .zip(vectors)
            .map(|(theta, vector)| {
                let value = self.shift + 1.0 / theta;
                let residual = self.residual(value, &vector);
                EigenPair { value, vector, residual }
            })
            .collect();
        pairs.sort_by(|a, b| a.value.total_cmp(&b.value));
        let worst = pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
        if worst > opts.residual_tol {
            return Err(Error::NoConvergence {
                iterations: stats.restarts,
                converged: pairs.iter().filter(|p| p.residual <= opts.residual_tol).count(),
                wanted: n_wanted,
                worst_residual: worst,
            });
        }
        Ok((pairs, stats))
    }

    /// All eigenpairs with eigenvalue in `[lo, hi]`, up to `max_count`. The
    /// shift of this pencil should lie inside the interval.
    pub fn window(&self, lo: f64, hi: f64, max_count: usize, opts: &EigenOptions) -> Result<(Vec<EigenPair<T>>, EigenStats)> {
        let reach = (self.shift - lo).max(hi - self.shift);
        let n = self.k.n_rows;
        let mut want = opts.n_wanted.max(4).min(max_count.max(1));
        let mut total = EigenStats::default();
        loop {
            let (pairs, stats) = self.nearest(want, opts)?;
            total.operator_applications += stats.operator_applications;
            total.restarts += stats.restarts;
            let farthest = pairs.iter().map(|p| (p.value - self.shift).abs()).fold(0.0, f64::max);
            let complete = farthest > reach || pairs.len() >= n;
            let inside: Vec<EigenPair<T>> = pairs.into_iter().filter(|p| p.value >= lo && p.value <= hi).collect();
            if complete {
                return Ok((inside, total));
            }
            if want >= max_count {
                log::warn!(
                    "eigenvalue window [{lo:.6e}, {hi:.6e}] holds more than {max_count} pairs; returning the nearest"
                );
                return Ok((inside, total));
            }
            want = (want * 2).min(max_count);
        }
    }

    fn residual(&self, value: f64, x: &[T]) -> f64 {
        let kx = self.k.mul_vec(x);
        let mx = self.m.mul_vec(x);
        let num: f64 = kx
            .iter()
            .zip(&mx)
            .map(|(a, b)| (*a - b.scaled(value)).modulus_sqr())
            .sum::<f64>()
            .sqrt();
        let den = crate::sparse::norm(&kx) + (value.abs() + self.shift.abs()) * crate::sparse::norm(&mx);
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    fn m_orthogonalize(&self, w: &mut [T], basis: &[Vec<T>], coeffs: &mut [T]) {
        let mw = self.m.mul_vec(w);
        for (i, v) in basis.iter().enumerate() {
            let c = dot(v, &mw);
            coeffs[i] += c;
            for (x, y) in w.iter_mut().zip(v) {
                *x -= c * *y;
            }
        }
    }

    fn m_norm(&self, w: &[T]) -> f64 {
        self.m.quadratic_form(w).max(0.0).sqrt()
    }

    fn random_vector(&self, rng: &mut ChaCha8Rng) -> Vec<T> {
        (0..self.k.n_rows)
            .map(|_| {
                let re: f64 = rng.random_range(-1.0..1.0);
                if T::IS_COMPLEX {
                    let im: f64 = rng.random_range(-1.0..1.0);
                    T::from_f64(re) + T::from_f64(im) * imaginary_unit::<T>()
                } else {
                    T::from_f64(re)
                }
            })
            .collect()
    }

    /// Fresh unit vector `M`-orthogonal to `against`, pushed through the
    /// operator once so it lies in the operator's range.
    fn start_vector(&self, against: &[Vec<T>], rng: &mut ChaCha8Rng, stats: &mut EigenStats) -> Result<Vec<T>> {
        for _ in 0..8 {
            let mut v = self.apply(&self.random_vector(rng))?;
            stats.operator_applications += 1;
            let mut scratch = vec![T::default(); against.len()];
            self.m_orthogonalize(&mut v, against, &mut scratch);
            self.m_orthogonalize(&mut v, against, &mut scratch);
            let nrm = self.m_norm(&v);
            if nrm > 0.0 && nrm.is_finite() {
                let inv = 1.0 / nrm;
                v.iter_mut().for_each(|x| *x = x.scaled(inv));
                return Ok(v);
            }
        }
        Err(Error::Singular("could not build a start vector".into()))
    }

    fn krylov_schur(
        &self,
        n_wanted: usize,
        deflate: &[Vec<T>],
        opts: &EigenOptions,
        rng: &mut ChaCha8Rng,
        stats: &mut EigenStats,
    ) -> Result<(Vec<f64>, Vec<Vec<T>>)> {
        let n = self.k.n_rows;
        let room = n - deflate.len();
        let n_wanted = n_wanted.min(room);
        let mut m_max = if opts.max_basis == 0 {
            (2 * n_wanted).max(n_wanted + 20)
        } else {
            opts.max_basis.max(n_wanted + 2)
        };
        m_max = m_max.min(room);

        let mut basis: Vec<Vec<T>> = Vec::with_capacity(m_max);
        // Projected matrix, stored densely by rows.
        let mut h: Vec<Vec<T>> = Vec::new();
        let mut coupling: Vec<T> = Vec::new();
        let mut next = self.start_vector(deflate, rng, stats)?;
        let mut restarts = 0usize;

        loop {
            while basis.len() < m_max {
                let j = basis.len();
                basis.push(next.clone());
                for row in h.iter_mut() {
                    row.push(T::default());
                }
                let mut new_row = coupling.clone();
                new_row.push(T::default());
                h.push(new_row);

                let mut w = self.apply(&basis[j])?;
                stats.operator_applications += 1;
                let mut drop = vec![T::default(); deflate.len()];
                self.m_orthogonalize(&mut w, deflate, &mut drop);
                let mut c = vec![T::default(); j + 1];
                self.m_orthogonalize(&mut w, &basis, &mut c);
                self.m_orthogonalize(&mut w, deflate, &mut drop);
                self.m_orthogonalize(&mut w, &basis, &mut c);
                for (i, ci) in c.iter().enumerate() {
                    h[i][j] = *ci;
                }
                let beta = self.m_norm(&w);
                let scale = c.iter().map(|x| x.modulus_sqr()).sum::<f64>().sqrt();
                coupling = vec![T::default(); j + 1];
                if beta > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                    let inv = 1.0 / beta;
                    next = w.into_iter().map(|x| x.scaled(inv)).collect();
                    coupling[j] = T::from_f64(beta);
                } else if basis.len() < room {
                    // Invariant subspace found; continue with a fresh direction.
                    let mut all = deflate.to_vec();
                    all.extend(basis.iter().cloned());
                    next = self.start_vector(&all, rng, stats)?;
                } else {
                    break;
                }
            }

            let m = basis.len();
            let (theta, s) = hermitian_eigen(&h)?;
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| theta[b].abs().total_cmp(&theta[a].abs()));
            let ritz_residual = |i: usize| -> f64 {
                let mut acc = T::default();
                for l in 0..m {
                    acc += coupling[l] * s[(l, i)];
                }
                acc.modulus_sqr().sqrt()
            };
            let converged = order[..n_wanted]
                .iter()
                .all(|&i| ritz_residual(i) <= opts.ritz_tol * theta[i].abs());
            if converged || m >= room {
                let thetas: Vec<f64> = order[..n_wanted].iter().map(|&i| theta[i]).collect();
                let vectors: Vec<Vec<T>> = order[..n_wanted].iter().map(|&i| combine(&basis, &s, i)).collect();
                stats.restarts += restarts;
                return Ok((thetas, vectors));
            }
            restarts += 1;
            if restarts > opts.max_restarts {
                let done = order[..n_wanted]
                    .iter()
                    .filter(|&&i| ritz_residual(i) <= opts.ritz_tol * theta[i].abs())
                    .count();
                let worst = order[..n_wanted]
                    .iter()
                    .map(|&i| ritz_residual(i) / theta[i].abs())
                    .fold(0.0, f64::max);
                return Err(Error::NoConvergence {
                    iterations: restarts,
                    converged: done,
                    wanted: n_wanted,
                    worst_residual: worst,
                });
            }

            // Thick restart on the leading Ritz vectors.
            let keep = (n_wanted + (m - n_wanted) / 2).min(m - 1).max(1);
            let kept = &order[..keep];
            let new_basis: Vec<Vec<T>> = kept.iter().map(|&i| combine(&basis, &s, i)).collect();
            let mut new_coupling = vec![T::default(); keep];
            for (c, &i) in new_coupling.iter_mut().zip(kept) {
                for l in 0..m {
                    *c += coupling[l] * s[(l, i)];
                }
            }
            h = (0..keep)
                .map(|r| {
                    (0..keep)
                        .map(|c| if r == c { T::from_f64(theta[kept[r]]) } else { T::default() })
                        .collect()
                })
                .collect();
            basis = new_basis;
            coupling = new_coupling;
        }
    }
}

fn imaginary_unit<T: Scalar>() -> T {
    // Only reached for complex scalars.
    let i = num_complex::Complex64::new(0.0, 1.0);
    let any: &dyn std::any::Any = &i;
    *any.downcast_ref::<T>().expect("imaginary unit requested for a real scalar")
}

fn combine<T: Scalar>(basis: &[Vec<T>], s: &Mat<T>, col: usize) -> Vec<T> {
    let mut out = vec![T::default(); basis[0].len()];
    for (l, v) in basis.iter().enumerate() {
        let c = s[(l, col)];
        for (o, x) in out.iter_mut().zip(v) {
            *o += c * *x;
        }
    }
    out
}

/// Eigen-decomposition of the Hermitian part of a small dense matrix.
fn hermitian_eigen<T: Scalar>(h: &[Vec<T>]) -> Result<(Vec<f64>, Mat<T>)> {
    let m = h.len();
    let a = Mat::<T>::from_fn(m, m, |i, j| {
        let v = h[i][j] + h[j][i].conjugate();
        v.scaled(0.5)
    });
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Singular(format!("dense eigensolver failed: {e:?}")))?;
    let values: Vec<f64> = (0..m).map(|i| evd.S()[i].real_part()).collect();
    Ok((values, evd.U().to_owned()))
}

/// Lowest `n` eigenpairs of a small dense Hermitian pencil, solved directly.
/// Used as a reference in tests and for tiny systems.
pub fn dense_generalized<T: Scalar>(k: &Csr<T>, m: &Csr<T>) -> Result<Vec<f64>> {
    let n = k.n_rows;
    let km = Mat::<T>::from_fn(n, n, |i, j| k.get(i, j));
    let mm = Mat::<T>::from_fn(n, n, |i, j| m.get(i, j));
    let llt = mm
        .llt(Side::Lower)
        .map_err(|e| Error::Singular(format!("mass matrix is not positive definite: {e:?}")))?;
    let l = llt.L().to_owned();
    // C = L⁻¹ K L⁻ᴴ
    let mut x = km.clone();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l.as_ref(), x.as_mut(), faer::Par::Seq);
    let mut xt = x.adjoint().to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l.as_ref(), xt.as_mut(), faer::Par::Seq);
    let rows: Vec<Vec<T>> = (0..n).map(|i| (0..n).map(|j| xt[(i, j)]).collect()).collect();
    let (mut values, _) = hermitian_eigen(&rows)?;
    values.sort_by(f64::total_cmp);
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::TripletBuilder;
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    /// 2D Dirichlet Laplacian on an n×n grid with identity mass: eigenvalues
    /// 4 sin²(πp/2(n+1)) + 4 sin²(πq/2(n+1)), with exact degeneracies p ↔ q.
    fn grid(n: usize) -> (Csr<f64>, Csr<f64>, Vec<f64>) {
        let idx = |i: usize, j: usize| i * n + j;
        let mut k = TripletBuilder::new(n * n, n * n);
        let mut m = TripletBuilder::new(n * n, n * n);
        for i in 0..n {
            for j in 0..n {
                k.push(idx(i, j), idx(i, j), 4.0);
                m.push(idx(i, j), idx(i, j), 1.0);
                if i + 1 < n {
                    k.push(idx(i, j), idx(i + 1, j), -1.0);
                    k.push(idx(i + 1, j), idx(i, j), -1.0);
                }
                if j + 1 < n {
                    k.push(idx(i, j), idx(i, j + 1), -1.0);
                    k.push(idx(i, j + 1), idx(i, j), -1.0);
                }
            }
        }
        let mut exact = Vec::new();
        for p in 1..=n {
            for q in 1..=n {
                let s = |r: usize| (PI * r as f64 / (2.0 * (n + 1) as f64)).sin().powi(2);
                exact.push(4.0 * s(p) + 4.0 * s(q));
            }
        }
        exact.sort_by(f64::total_cmp);
        (k.build(), m.build(), exact)
    }

    #[test]
    fn lowest_with_degeneracies() {
        let (k, m, exact) = grid(30);
        let opts = EigenOptions::new(-0.01, 10);
        let si = ShiftInvert::new(&k, &m, -0.01, true).unwrap();
        let (pairs, _) = si.nearest(10, &opts).unwrap();
        assert_eq!(pairs.len(), 10);
        for (p, e) in pairs.iter().zip(&exact) {
            assert_relative_eq!(p.value, *e, max_relative = 1e-10);
            assert!(p.residual < 1e-10);
        }
        // M-orthonormality.
        for a in &pairs {
            for b in &pairs {
                let g = dot(&a.vector, &m.mul_vec(&b.vector));
                let expect = if std::ptr::eq(a, b) { 1.0 } else { 0.0 };
                assert!((g - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn interior_window_is_complete() {
        let (k, m, exact) = grid(20);
        let (lo, hi) = (0.9, 1.3);
        let si = ShiftInvert::new(&k, &m, 0.5 * (lo + hi), false).unwrap();
        let (pairs, _) = si.window(lo, hi, 200, &EigenOptions::new(1.1, 8)).unwrap();
        let expect: Vec<f64> = exact.into_iter().filter(|v| *v >= lo && *v <= hi).collect();
        assert_eq!(pairs.len(), expect.len());
        for (p, e) in pairs.iter().zip(&expect) {
            assert_relative_eq!(p.value, *e, max_relative = 1e-9);
        }
    }

    #[test]
    fn complex_hermitian_matches_dense() {
        // Ring with a twisted (Bloch-phase) closing bond.
        let n = 40;
        let phase = Complex64::from_polar(1.0, 0.7);
        let mut k = TripletBuilder::new(n, n);
        let mut m = TripletBuilder::new(n, n);
        for i in 0..n {
            k.push(i, i, Complex64::new(2.0, 0.0));
            m.push(i, i, Complex64::new(1.0 + 0.1 * (i % 3) as f64, 0.0));
            let j = (i + 1) % n;
            let w = if j == 0 { -phase } else { Complex64::new(-1.0, 0.0) };
            k.push(i, j, w);
            k.push(j, i, w.conj());
        }
        let (k, m) = (k.build(), m.build());
        let dense = dense_generalized(&k, &m).unwrap();
        let si = ShiftInvert::new(&k, &m, -0.1, true).unwrap();
        let (pairs, _) = si.nearest(6, &EigenOptions::new(-0.1, 6)).unwrap();
        for (p, e) in pairs.iter().zip(&dense) {
            assert_relative_eq!(p.value, *e, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let (k, m, _) = grid(15);
        let si = ShiftInvert::new(&k, &m, -0.01, true).unwrap();
        let a = si.nearest(5, &EigenOptions::new(-0.01, 5)).unwrap().0;
        let b = si.nearest(5, &EigenOptions::new(-0.01, 5)).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn small_system_full_spectrum() {
        let (k, m, exact) = grid(3);
        let si = ShiftInvert::new(&k, &m, -1.0, true).unwrap();
        let (pairs, _) = si.nearest(20, &EigenOptions::new(-1.0, 20)).unwrap();
        assert_eq!(pairs.len(), 9);
        for (p, e) in pairs.iter().zip(&exact) {
            assert_relative_eq!(p.value, *e, max_relative = 1e-10);
        }
    }
}
