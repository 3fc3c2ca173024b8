//! Small dense linear algebra helpers on top of `nalgebra`.

use crate::scalar::Scalar;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

const POWER_TOL: f64 = 1e-8;
const POWER_MAX_ITER: usize = 500;

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration (relative tolerance 1e-8, at most 500 iterations).
pub fn largest_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    let n = m.nrows();
    if n == 0 {
        return T::zero();
    }
    // fixed, non-symmetric start vector so no eigenvector is missed by construction
    let mut v = DVector::from_fn(n, |i, _| T::one() + T::lit(0.618_033_988_75 * (i as f64 + 1.0)).fract());
    let norm = v.norm();
    v /= norm;
    let mut estimate = T::zero();
    for _ in 0..POWER_MAX_ITER {
        let w = m * &v;
        let next = v.dot(&w);
        let wn = w.norm();
        if wn == T::zero() {
            return T::zero();
        }
        v = w / wn;
        let converged = (next - estimate).abs() <= T::lit(POWER_TOL) * next.abs().max(T::lit(1e-300));
        estimate = next;
        if converged {
            break;
        }
    }
    estimate.max(T::zero())
}

/// Spectral radius of a general square matrix, via its real Schur form.
pub fn spectral_radius<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re * z.re + z.im * z.im).sqrt())
        .fold(T::zero(), |a, b| a.max(b))
}

pub fn symmetric_eigen<T: Scalar>(m: &DMatrix<T>) -> SymmetricEigen<T, nalgebra::Dyn> {
    SymmetricEigen::new(m.clone())
}

pub fn min_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    symmetric_eigen(m)
        .eigenvalues
        .iter()
        .copied()
        .fold(T::max_value().unwrap_or_else(|| T::lit(f64::MAX)), |a, b| a.min(b))
}

pub fn is_symmetric<T: Scalar>(m: &DMatrix<T>, tol: T) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Symmetric with smallest eigenvalue strictly above `floor`.
pub fn is_positive_definite<T: Scalar>(m: &DMatrix<T>, floor: T) -> bool {
    let scale = m.iter().fold(T::one(), |a, &b| a.max(b.abs()));
    is_symmetric(m, T::lit(1e-10) * scale) && min_eigenvalue(m) > floor
}

pub fn log_det_spd<T: Scalar>(m: &DMatrix<T>) -> Option<T> {
    let chol = nalgebra::Cholesky::new(m.clone())?;
    let l = chol.l_dirty();
    let mut acc = T::zero();
    for i in 0..m.nrows() {
        acc += l[(i, i)].ln();
    }
    Some(acc + acc)
}

/// Trace of the product `a * b` without forming it.
pub fn trace_product<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = T::zero();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}
