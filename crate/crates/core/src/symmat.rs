//! Dense symmetric positive-definite kernels.
//!
//! Every SPD matrix is carried together with its lower Cholesky factor, so
//! log-determinants are read off the diagonal and a rank-one modification
//! costs `O(D^2)` instead of a fresh `O(D^3)` factorization. The cached inverse
//! is maintained with Sherman-Morrison alongside the factor.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative asymmetry accepted by [`SpdMatrix::new`] before symmetrizing.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Square dense matrix in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![T::zero(); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row slices. Fails unless the rows form a square.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { dim, data })
    }

    pub fn from_row_major(dim: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: data.len() });
        }
        Ok(Self { dim, data })
    }

    /// `v vᵀ`
    pub fn outer(v: &[T]) -> Self {
        let dim = v.len();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = v[i] * v[j];
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.dim.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        Self { dim: self.dim, data }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        Self { dim: self.dim, data }
    }

    pub fn scale(&self, s: T) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&a| a * s).collect() }
    }

    /// In-place `self += w · v vᵀ`.
    pub fn add_outer(&mut self, v: &[T], w: T) {
        for i in 0..self.dim {
            let wi = w * v[i];
            for j in 0..self.dim {
                self.data[i * self.dim + j] = self.data[i * self.dim + j] + wi * v[j];
            }
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] = out.data[i * n + j] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// `(M + Mᵀ) / 2`
    pub fn symmetrized(&self) -> Self {
        let half = T::of(0.5);
        let mut s = self.clone();
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    /// Largest `|m_ij - m_ji|` relative to the largest entry.
    pub fn relative_asymmetry(&self) -> T {
        let scale = self.max_abs();
        if scale == T::zero() {
            return T::zero();
        }
        let mut worst = T::zero();
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / scale
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Applies a symmetric permutation `P M Pᵀ`, with `perm[i]` the source row of row `i`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(i, j)] = self[(perm[i], perm[j])];
            }
        }
        out
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.dim + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.dim + j]
    }
}

/// A symmetric positive-definite matrix. Construction proves positivity by factorizing.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix<T> {
    inner: Matrix<T>,
}

impl<T: Scalar> SpdMatrix<T> {
    /// Validates symmetry to [`SYMMETRY_TOL`], symmetrizes, and checks positivity.
    pub fn new(m: Matrix<T>) -> Result<Self> {
        if m.dim() == 0 {
            return Err(Error::InvalidInput("matrix dimension must be at least 1".into()));
        }
        if !m.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let asym = m.relative_asymmetry();
        if asym > T::of(SYMMETRY_TOL) {
            return Err(Error::NotSymmetric(asym.as_f64()));
        }
        let inner = m.symmetrized();
        cholesky(&inner)?;
        Ok(Self { inner })
    }

    /// Skips validation; the caller guarantees symmetry and positivity.
    pub(crate) fn new_unchecked(inner: Matrix<T>) -> Self {
        Self { inner }
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.inner
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.inner
    }
}

/// Cholesky factorization with cached log-determinant and inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct DetFactorization<T> {
    matrix: SpdMatrix<T>,
    lower: Matrix<T>,
    log_det: T,
    inverse: Matrix<T>,
}

impl<T: Scalar> DetFactorization<T> {
    pub fn matrix(&self) -> &SpdMatrix<T> {
        &self.matrix
    }

    /// Lower-triangular factor `L` with `L Lᵀ = matrix`.
    pub fn lower(&self) -> &Matrix<T> {
        &self.lower
    }

    pub fn log_det(&self) -> T {
        self.log_det
    }

    pub fn det(&self) -> T {
        self.log_det.exp()
    }

    pub fn inverse(&self) -> &Matrix<T> {
        &self.inverse
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Solves `matrix · x = b` through the triangular factor.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let y = forward_substitute(&self.lower, b);
        back_substitute_transposed(&self.lower, &y)
    }

    /// Quadratic form `vᵀ matrix⁻¹ v`.
    pub fn inv_quad(&self, v: &[T]) -> T {
        let y = forward_substitute(&self.lower, v);
        y.iter().map(|&a| a * a).sum()
    }
}

/// Factorizes an SPD matrix, caching its log-determinant and inverse.
pub fn factorize<T: Scalar>(m: &SpdMatrix<T>) -> Result<DetFactorization<T>> {
    let lower = cholesky(m.matrix())?;
    let log_det = log_det_from_lower(&lower);
    let inverse = inverse_from_lower(&lower);
    Ok(DetFactorization { matrix: m.clone(), lower, log_det, inverse })
}

/// Convenience wrapper: validate, then factorize.
pub fn factorize_matrix<T: Scalar>(m: Matrix<T>) -> Result<DetFactorization<T>> {
    factorize(&SpdMatrix::new(m)?)
}

/// Factorization of `matrix + w · v vᵀ`.
///
/// The log-determinant follows the matrix-determinant lemma, the inverse
/// Sherman-Morrison, and the Cholesky factor an `O(D^2)` update or downdate.
pub fn rank_one_update<T: Scalar>(f: &DetFactorization<T>, v: &[T], w: T) -> Result<DetFactorization<T>> {
    let mut out = f.clone();
    rank_one_update_in_place(&mut out, v, w)?;
    Ok(out)
}

/// In-place form of [`rank_one_update`]. On error `f` is left untouched.
pub fn rank_one_update_in_place<T: Scalar>(f: &mut DetFactorization<T>, v: &[T], w: T) -> Result<()> {
    let d = f.dim();
    if v.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: v.len() });
    }
    if w == T::zero() {
        return Ok(());
    }
    let u = f.solve(v);
    let vtu: T = v.iter().zip(&u).map(|(&a, &b)| a * b).sum();
    let s = T::one() + w * vtu;
    if !(s > T::zero()) || !s.is_finite() {
        return Err(Error::DowndateBrokePositivity);
    }

    let scaled: Vec<T> = v.iter().map(|&x| x * w.abs().sqrt()).collect();
    let mut lower = f.lower.clone();
    if w > T::zero() {
        cholesky_update(&mut lower, &scaled);
    } else {
        cholesky_downdate(&mut lower, &scaled)?;
    }

    let mut m = f.matrix.inner.clone();
    m.add_outer(v, w);
    f.matrix = SpdMatrix::new_unchecked(m.symmetrized());
    f.inverse.add_outer(&u, -w / s);
    f.inverse = f.inverse.symmetrized();
    f.log_det = f.log_det + s.ln();
    f.lower = lower;
    Ok(())
}

/// Second-order expansion of `|S + eps·Q|` about `S`:
/// `|S| (1 + eps tr(A) + eps²/2 (tr(A)² − tr(A²)))` with `A = Q S⁻¹`.
pub fn approx_det_second_order<T: Scalar>(f: &DetFactorization<T>, q: &Matrix<T>, eps: T) -> T {
    f.det() * second_order_factor(f, q, eps)
}

/// Logarithm of [`approx_det_second_order`], computed without exponentiating `|S|`.
/// Returns NaN when the expansion is not positive.
pub fn approx_log_det_second_order<T: Scalar>(f: &DetFactorization<T>, q: &Matrix<T>, eps: T) -> T {
    let factor = second_order_factor(f, q, eps);
    if factor > T::zero() {
        f.log_det() + factor.ln()
    } else {
        T::nan()
    }
}

fn second_order_factor<T: Scalar>(f: &DetFactorization<T>, q: &Matrix<T>, eps: T) -> T {
    let a = q.matmul(f.inverse());
    let tr = a.trace();
    let n = a.dim();
    let mut tr_sq = T::zero();
    for i in 0..n {
        for j in 0..n {
            tr_sq = tr_sq + a[(i, j)] * a[(j, i)];
        }
    }
    T::one() + eps * tr + eps * eps * T::of(0.5) * (tr * tr - tr_sq)
}

fn cholesky<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>> {
    let n = m.dim();
    let mut l = Matrix::zeros(n);
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag = diag - l[(j, k)] * l[(j, k)];
        }
        if !(diag > T::zero()) || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

fn log_det_from_lower<T: Scalar>(l: &Matrix<T>) -> T {
    let two = T::of(2.0);
    (0..l.dim()).map(|i| two * l[(i, i)].ln()).sum()
}

fn inverse_from_lower<T: Scalar>(l: &Matrix<T>) -> Matrix<T> {
    let n = l.dim();
    let mut inv = Matrix::zeros(n);
    let mut e = vec![T::zero(); n];
    for c in 0..n {
        e.iter_mut().for_each(|x| *x = T::zero());
        e[c] = T::one();
        let y = forward_substitute(l, &e);
        let x = back_substitute_transposed(l, &y);
        for r in 0..n {
            inv[(r, c)] = x[r];
        }
    }
    inv.symmetrized()
}

/// Solves `L y = b`.
fn forward_substitute<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.dim();
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Solves `Lᵀ x = y`.
fn back_substitute_transposed<T: Scalar>(l: &Matrix<T>, y: &[T]) -> Vec<T> {
    let n = l.dim();
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// `L Lᵀ + x xᵀ` via Givens-style rotations.
fn cholesky_update<T: Scalar>(l: &mut Matrix<T>, x: &[T]) {
    let n = l.dim();
    let mut x = x.to_vec();
    for k in 0..n {
        let lkk = l[(k, k)];
        let r = lkk.hypot(x[k]);
        let c = r / lkk;
        let s = x[k] / lkk;
        l[(k, k)] = r;
        for i in (k + 1)..n {
            let lik = (l[(i, k)] + s * x[i]) / c;
            x[i] = c * x[i] - s * lik;
            l[(i, k)] = lik;
        }
    }
}

/// `L Lᵀ − x xᵀ` via hyperbolic rotations.
fn cholesky_downdate<T: Scalar>(l: &mut Matrix<T>, x: &[T]) -> Result<()> {
    let n = l.dim();
    let mut x = x.to_vec();
    for k in 0..n {
        let lkk = l[(k, k)];
        let diff = (lkk - x[k]) * (lkk + x[k]);
        if !(diff > T::zero()) {
            return Err(Error::DowndateBrokePositivity);
        }
        let r = diff.sqrt();
        let c = r / lkk;
        let s = x[k] / lkk;
        l[(k, k)] = r;
        for i in (k + 1)..n {
            let lik = (l[(i, k)] - s * x[i]) / c;
            x[i] = c * x[i] - s * lik;
            l[(i, k)] = lik;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> Matrix<f64> {
        let a = Matrix::from_row_major(d, (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        a.matmul(&a.transpose()).add(&Matrix::identity(d))
    }

    // Laplace expansion along the first row; the independent determinant oracle.
    fn cofactor_det(m: &[Vec<f64>]) -> f64 {
        let n = m.len();
        if n == 1 {
            return m[0][0];
        }
        (0..n)
            .map(|c| {
                let minor: Vec<Vec<f64>> = m[1..]
                    .iter()
                    .map(|r| r.iter().enumerate().filter(|&(j, _)| j != c).map(|(_, &v)| v).collect())
                    .collect();
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[0][c] * cofactor_det(&minor)
            })
            .sum()
    }

    #[test]
    fn identity_factorization() {
        let f = factorize_matrix(Matrix::<f64>::identity(3)).unwrap();
        assert_eq!(f.log_det(), 0.0);
        assert!(f.inverse().max_abs_diff(&Matrix::identity(3)) < 1e-15);
    }

    #[test]
    fn diagonal_log_det() {
        let f = factorize_matrix(Matrix::from_diagonal(&[2.0f64, 2.0, 2.0])).unwrap();
        assert!((f.log_det() - 3.0 * 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn log_det_matches_cofactor_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = random_spd(&mut rng, 4);
            let det = cofactor_det(&m.rows());
            let f = factorize_matrix(m.clone()).unwrap();
            assert!((f.det() - det).abs() / det < 1e-10);
            assert!(m.matmul(f.inverse()).max_abs_diff(&Matrix::identity(4)) < 1e-8);
        }
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        let m = Matrix::from_rows(&[vec![1.0f64, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(factorize_matrix(m), Err(Error::NotPositiveDefinite)));
        let m = Matrix::from_rows(&[vec![1.0f64, 0.5], vec![0.4, 1.0]]).unwrap();
        assert!(matches!(SpdMatrix::new(m), Err(Error::NotSymmetric(_))));
        // duplicate observations with a zero prior scatter give a singular matrix
        assert!(matches!(factorize_matrix(Matrix::<f64>::zeros(2)), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn tiny_asymmetry_is_absorbed() {
        let m = Matrix::from_rows(&[vec![2.0f64, 0.5], vec![0.5 + 1e-14, 2.0]]).unwrap();
        let s = SpdMatrix::new(m).unwrap();
        assert_eq!(s.matrix()[(0, 1)], s.matrix()[(1, 0)]);
    }

    #[test]
    fn diagonal_update() {
        let f = factorize_matrix(Matrix::<f64>::identity(2)).unwrap();
        let g = rank_one_update(&f, &[1.0, 0.0], 1.0).unwrap();
        assert!(g.matrix().matrix().max_abs_diff(&Matrix::from_diagonal(&[2.0, 1.0])) < 1e-15);
        assert!((g.log_det() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn downdate_then_update_restores() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = factorize_matrix(random_spd(&mut rng, 3)).unwrap();
        let v = [0.3, -0.2, 0.5];
        let g = rank_one_update(&rank_one_update(&f, &v, -0.4).unwrap(), &v, 0.4).unwrap();
        assert!((g.log_det() - f.log_det()).abs() < 1e-10);
        assert!(g.inverse().max_abs_diff(f.inverse()) < 1e-10);
        assert!(g.lower().max_abs_diff(f.lower()) < 1e-10);
        assert!(g.matrix().matrix().max_abs_diff(f.matrix().matrix()) < 1e-10);
    }

    #[test]
    fn update_matches_refactorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let m = random_spd(&mut rng, 4);
            let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = rank_one_update(&factorize_matrix(m.clone()).unwrap(), &v, 0.7).unwrap();
            let mut direct = m.clone();
            direct.add_outer(&v, 0.7);
            let h = factorize_matrix(direct).unwrap();
            assert!((g.log_det() - h.log_det()).abs() / h.log_det().abs().max(1.0) < 1e-9);
            assert!(g.inverse().max_abs_diff(h.inverse()) < 1e-9);
            assert!(g.lower().max_abs_diff(h.lower()) < 1e-9);
        }
    }

    #[test]
    fn downdate_past_positivity_fails_and_leaves_input() {
        let mut f = factorize_matrix(Matrix::<f64>::identity(2)).unwrap();
        let before = f.clone();
        let r = rank_one_update_in_place(&mut f, &[1.0, 0.0], -1.0);
        assert!(matches!(r, Err(Error::DowndateBrokePositivity)));
        assert_eq!(f, before);
    }

    #[test]
    fn long_update_chain_does_not_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m0 = random_spd(&mut rng, 3);
        let mut f = factorize_matrix(m0.clone()).unwrap();
        let mut direct = m0;
        let mut pending: Vec<Vec<f64>> = Vec::new();
        for step in 0..1000 {
            // alternate additions with removal of earlier additions
            if step % 3 == 2 && !pending.is_empty() {
                let v = pending.swap_remove(rng.random_range(0..pending.len()));
                f = rank_one_update(&f, &v, -1.0).unwrap();
                direct.add_outer(&v, -1.0);
            } else {
                let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                f = rank_one_update(&f, &v, 1.0).unwrap();
                direct.add_outer(&v, 1.0);
                pending.push(v);
            }
        }
        let h = factorize_matrix(direct.symmetrized()).unwrap();
        assert!((f.log_det() - h.log_det()).abs() / h.log_det().abs() < 1e-9);
        let prod = f.matrix().matrix().matmul(f.inverse());
        assert!(prod.max_abs_diff(&Matrix::identity(3)) < 1e-8);
    }

    #[test]
    fn second_order_zero_eps_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = factorize_matrix(random_spd(&mut rng, 3)).unwrap();
        let q = random_spd(&mut rng, 3);
        assert_eq!(approx_det_second_order(&f, &q, 0.0), f.det());
    }

    #[test]
    fn second_order_exact_for_scaled_identity_in_2d() {
        let f = factorize_matrix(Matrix::<f64>::identity(2)).unwrap();
        let a = approx_det_second_order(&f, &Matrix::identity(2), 0.1);
        assert!((a - 1.21).abs() < 1e-14);
        let exact = factorize_matrix(Matrix::identity(2).scale(1.1)).unwrap().det();
        assert!((a - exact).abs() < 1e-14);
    }

    #[test]
    fn second_order_error_is_cubic() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let s = random_spd(&mut rng, 3);
        let f = factorize_matrix(s.clone()).unwrap();
        let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        // rank-one Q is exact to second order; use a full-rank Q so the cubic term survives
        let q = random_spd(&mut rng, 3).add(&Matrix::outer(&v));
        let err = |eps: f64| {
            let exact = factorize_matrix(s.add(&q.scale(eps))).unwrap().det();
            (approx_det_second_order(&f, &q, eps) - exact).abs() / exact
        };
        let (e1, e2, e3) = (err(1e-1), err(1e-2), err(1e-3));
        for ratio in [e1 / e2, e2 / e3] {
            assert!(ratio > 500.0 && ratio < 2000.0, "ratio {ratio}");
        }
    }

    #[test]
    fn log_det_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_spd(&mut rng, 4);
        let a = factorize_matrix(m.clone()).unwrap().log_det();
        let b = factorize_matrix(m.permuted(&[2, 0, 3, 1])).unwrap().log_det();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let f = factorize_matrix(Matrix::<f32>::from_diagonal(&[2.0, 3.0])).unwrap();
        assert!((f.log_det() - 6f32.ln()).abs() < 1e-6);
        let g = rank_one_update(&f, &[1.0, 1.0], 0.5).unwrap();
        let h = factorize_matrix(Matrix::from_rows(&[vec![2.5f32, 0.5], vec![0.5, 3.5]]).unwrap()).unwrap();
        assert!((g.log_det() - h.log_det()).abs() < 1e-5);
    }
}
