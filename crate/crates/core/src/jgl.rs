//! Fused joint graphical lasso on per-class residual covariances, solved by ADMM.

use crate::error::{Error, Result};
use crate::linalg;
use crate::penalty::{eval_l1, eval_pairwise_fusion, soft_threshold};
use crate::scalar::Scalar;
use nalgebra::DMatrix;

/// Per-class `J x J` precision (inverse error covariance) matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionSet<T: Scalar> {
    matrices: Vec<DMatrix<T>>,
}

impl<T: Scalar> PrecisionSet<T> {
    pub fn identity(classes: usize, series: usize) -> Self {
        PrecisionSet {
            matrices: vec![DMatrix::identity(series, series); classes],
        }
    }

    pub fn new(matrices: Vec<DMatrix<T>>) -> Result<Self> {
        let j = matrices.first().map_or(0, |m| m.nrows());
        if j == 0 || matrices.iter().any(|m| m.shape() != (j, j)) {
            return Err(Error::DimensionMismatch("precision matrices must be equal-size squares".into()));
        }
        Ok(PrecisionSet { matrices })
    }

    pub fn classes(&self) -> usize {
        self.matrices.len()
    }

    pub fn series(&self) -> usize {
        self.matrices[0].nrows()
    }

    /// omega_ij^{(k)}
    pub fn get(&self, k: usize, i: usize, j: usize) -> T {
        self.matrices[k][(i, j)]
    }

    pub fn matrix(&self, k: usize) -> &DMatrix<T> {
        &self.matrices[k]
    }

    pub fn matrices(&self) -> &[DMatrix<T>] {
        &self.matrices
    }

    pub fn into_matrices(self) -> Vec<DMatrix<T>> {
        self.matrices
    }

    /// Index of the first class failing the symmetric positive definite check.
    pub fn first_not_positive_definite(&self, floor: T) -> Option<usize> {
        self.matrices
            .iter()
            .position(|m| !linalg::is_positive_definite(m, floor))
    }

    pub fn ensure_positive_definite(&self) -> Result<()> {
        match self.first_not_positive_definite(T::lit(PD_FLOOR)) {
            Some(class) => Err(Error::NotPositiveDefinite { class }),
            None => Ok(()),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        self.matrices.iter().all(|m| {
            (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == T::zero()))
        })
    }

    /// Nonzero entries strictly above the diagonal, per class.
    pub fn edge_counts(&self) -> Vec<usize> {
        self.matrices
            .iter()
            .map(|m| {
                (0..m.nrows())
                    .map(|i| (i + 1..m.ncols()).filter(|&j| m[(i, j)] != T::zero()).count())
                    .sum()
            })
            .collect()
    }
}

/// Smallest eigenvalue accepted by the positive definiteness check.
pub const PD_FLOOR: f64 = 1e-10;

/// Multiplier `J_w` on `log|Omega|` in the joint objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum LogDetWeight {
    /// `N J log|Omega|`, as the joint criterion is written.
    #[default]
    SeriesCount,
    /// `N log|Omega|`, the Gaussian log-likelihood weight.
    Likelihood,
}

impl LogDetWeight {
    pub fn value<T: Scalar>(self, series: usize) -> T {
        match self {
            LogDetWeight::SeriesCount => T::from_count(series),
            LogDetWeight::Likelihood => T::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmOptions<T> {
    /// Augmented Lagrangian parameter for the criterion divided by `N`.
    pub rho: T,
    pub max_iter: usize,
    pub primal_tol: T,
    pub dual_tol: T,
    pub log_det_weight: LogDetWeight,
}

impl<T: Scalar> Default for AdmmOptions<T> {
    fn default() -> Self {
        AdmmOptions {
            rho: T::one(),
            max_iter: 1000,
            primal_tol: T::lit(1e-5),
            dual_tol: T::lit(1e-5),
            log_det_weight: LogDetWeight::SeriesCount,
        }
    }
}

impl<T: Scalar> AdmmOptions<T> {
    fn validate(&self) -> Result<()> {
        if !(self.rho > T::zero()) {
            return Err(Error::InvalidParameter(format!("ADMM rho must be > 0, got {}", self.rho)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("ADMM max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// `S = E'E / N` for each class.
pub fn residual_covariance<T: Scalar>(residuals: &[DMatrix<T>]) -> Result<Vec<DMatrix<T>>> {
    residuals
        .iter()
        .map(|e| {
            let n = e.nrows();
            if n == 0 {
                return Err(Error::InvalidSpec("residual covariance needs N >= 1".into()));
            }
            Ok(e.tr_mul(e) / T::from_count(n))
        })
        .collect()
}

/// Exact minimizer of
/// `1/2 sum (z_k - x_k)^2 + t_fuse sum_{k<k'} |z_k - z_k'| + t_sparse sum |z_k|`.
///
/// Sorts, shifts the i-th smallest value up by `t_fuse (K + 1 - 2i)`, pools
/// adjacent violators back into a nondecreasing sequence, unsorts and soft
/// thresholds.
pub fn clique_fusion_prox<T: Scalar>(x: &[T], t_fuse: T, t_sparse: T) -> Vec<T> {
    let k = x.len();
    let mut out = vec![T::zero(); k];
    clique_fusion_prox_into(x, t_fuse, t_sparse, &mut out, &mut Vec::new());
    out
}

fn clique_fusion_prox_into<T: Scalar>(
    x: &[T],
    t_fuse: T,
    t_sparse: T,
    out: &mut [T],
    scratch: &mut Vec<(T, usize)>,
) {
    let k = x.len();
    if k == 0 {
        return;
    }
    if t_fuse == T::zero() || k == 1 {
        for (o, v) in out.iter_mut().zip(x) {
            *o = soft_threshold(*v, t_sparse);
        }
        return;
    }
    let mut order: Vec<usize> = (0..k).collect();
    // stable: ties keep input order
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(std::cmp::Ordering::Equal));

    // blocks of (sum, count)
    scratch.clear();
    let kp1 = T::from_count(k + 1);
    for (rank, &idx) in order.iter().enumerate() {
        let shift = t_fuse * (kp1 - T::from_count(2 * (rank + 1)));
        let mut sum = x[idx] + shift;
        let mut count = 1usize;
        while let Some(&(psum, pcount)) = scratch.last() {
            if psum / T::from_count(pcount) >= sum / T::from_count(count) {
                sum += psum;
                count += pcount;
                scratch.pop();
            } else {
                break;
            }
        }
        scratch.push((sum, count));
    }
    let mut rank = 0;
    for &(sum, count) in scratch.iter() {
        let v = soft_threshold(sum / T::from_count(count), t_sparse);
        for &idx in &order[rank..rank + count] {
            out[idx] = v;
        }
        rank += count;
    }
}

/// Exact minimizer of `N tr(S W) - N jw log|W| + rho/2 ||W - A||_F^2`.
pub fn admm_omega_update<T: Scalar>(s: &DMatrix<T>, a: &DMatrix<T>, rho: T, n: usize, jw: T) -> Result<DMatrix<T>> {
    let nf = T::from_count(n);
    let m = a * rho - s * nf;
    let scale = m.iter().fold(T::one(), |acc, v| acc.max(v.abs()));
    if !linalg::is_symmetric(&m, T::lit(1e-9) * scale) {
        return Err(Error::InvalidParameter("omega update needs symmetric S and A".into()));
    }
    let eig = linalg::symmetric_eigen(&m);
    let four_rho_n = T::lit(4.0) * rho * nf * jw;
    let two_rho = rho + rho;
    let mapped = eig.eigenvalues.map(|e| (e + (e * e + four_rho_n).sqrt()) / two_rho);
    let v = &eig.eigenvectors;
    let mut w = v * DMatrix::from_diagonal(&mapped) * v.transpose();
    symmetrize(&mut w);
    Ok(w)
}

fn symmetrize<T: Scalar>(m: &mut DMatrix<T>) {
    let half = T::lit(0.5);
    for i in 0..m.nrows() {
        for j in 0..i {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// ADMM iterates, reusable as a warm start.
#[derive(Debug, Clone, PartialEq)]
pub struct JglState<T: Scalar> {
    pub theta: Vec<DMatrix<T>>,
    pub z: Vec<DMatrix<T>>,
    pub u: Vec<DMatrix<T>>,
}

impl<T: Scalar> JglState<T> {
    pub fn cold(classes: usize, series: usize) -> Self {
        JglState {
            theta: vec![DMatrix::identity(series, series); classes],
            z: vec![DMatrix::identity(series, series); classes],
            u: vec![DMatrix::zeros(series, series); classes],
        }
    }
}

#[derive(Debug, Clone)]
pub struct JglOutcome<T: Scalar> {
    pub precision: PrecisionSet<T>,
    pub state: JglState<T>,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: T,
    pub dual_residual: T,
}

/// Fused joint graphical lasso:
/// `sum_k N [tr(S_k W_k) - jw log|W_k|] + gamma1 P1(W) + gamma2 P2(W)`.
///
/// Returns the sparse consensus iterate when it is positive definite, the
/// smooth iterate otherwise. Non-convergence is reported in the outcome.
pub fn jgl_fit<T: Scalar>(
    covariances: &[DMatrix<T>],
    gamma1: T,
    gamma2: T,
    n: usize,
    options: &AdmmOptions<T>,
    warm: Option<&JglState<T>>,
) -> Result<JglOutcome<T>> {
    options.validate()?;
    if !(gamma1 >= T::zero() && gamma2 >= T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "gamma1, gamma2 must be >= 0, got {gamma1}, {gamma2}"
        )));
    }
    let k = covariances.len();
    let j = covariances.first().map_or(0, |s| s.nrows());
    if k == 0 || j == 0 || covariances.iter().any(|s| s.shape() != (j, j)) {
        return Err(Error::DimensionMismatch("covariances must be equal-size squares".into()));
    }
    if n == 0 {
        return Err(Error::InvalidSpec("N must be positive".into()));
    }
    let jw = options.log_det_weight.value::<T>(j);
    let rho = options.rho;
    // iterate on the criterion divided by N; same minimizer
    let nf = T::from_count(n);
    let t_fuse = gamma1 / (nf * rho);
    let t_sparse = gamma2 / (nf * rho);

    let mut state = match warm {
        Some(w) if w.z.len() == k && w.z[0].nrows() == j => w.clone(),
        _ => JglState::cold(k, j),
    };

    let mut xs = vec![T::zero(); k];
    let mut zs = vec![T::zero(); k];
    let mut scratch = Vec::with_capacity(k);
    let mut primal = T::zero();
    let mut dual = T::zero();
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..options.max_iter {
        iterations = it + 1;
        for c in 0..k {
            let a = &state.z[c] - &state.u[c];
            state.theta[c] = admm_omega_update(&covariances[c], &a, rho, 1, jw)?;
        }
        let mut dual_sq = T::zero();
        for r in 0..j {
            for col in r..j {
                for c in 0..k {
                    xs[c] = state.theta[c][(r, col)] + state.u[c][(r, col)];
                }
                clique_fusion_prox_into(&xs, t_fuse, t_sparse, &mut zs, &mut scratch);
                let mult = if r == col { T::one() } else { T::lit(2.0) };
                for c in 0..k {
                    let d = zs[c] - state.z[c][(r, col)];
                    dual_sq += mult * d * d;
                    state.z[c][(r, col)] = zs[c];
                    state.z[c][(col, r)] = zs[c];
                }
            }
        }
        let mut primal_sq = T::zero();
        for c in 0..k {
            let diff = &state.theta[c] - &state.z[c];
            primal_sq += diff.norm_squared();
            state.u[c] += diff;
        }
        primal = primal_sq.sqrt();
        dual = rho * dual_sq.sqrt();
        if primal < options.primal_tol && dual < options.dual_tol {
            converged = true;
            break;
        }
    }

    let sparse = PrecisionSet { matrices: state.z.clone() };
    let precision = if sparse.first_not_positive_definite(T::lit(PD_FLOOR)).is_none() {
        sparse
    } else {
        PrecisionSet {
            matrices: state.theta.clone(),
        }
    };
    Ok(JglOutcome {
        precision,
        state,
        iterations,
        converged,
        primal_residual: primal,
        dual_residual: dual,
    })
}

/// The objective minimized by [`jgl_fit`]; `+inf` when some matrix is not
/// positive definite.
pub fn jgl_objective<T: Scalar>(
    omega: &PrecisionSet<T>,
    covariances: &[DMatrix<T>],
    n: usize,
    gamma1: T,
    gamma2: T,
    log_det_weight: LogDetWeight,
) -> T {
    let jw = log_det_weight.value::<T>(omega.series());
    let nf = T::from_count(n);
    let mut total = T::zero();
    for (w, s) in omega.matrices().iter().zip(covariances) {
        match linalg::log_det_spd(w) {
            Some(ld) => total += nf * (linalg::trace_product(s, w) - jw * ld),
            None => return T::lit(f64::INFINITY),
        }
    }
    let slices: Vec<&[T]> = omega.matrices().iter().map(|m| m.as_slice()).collect();
    let fusion = eval_pairwise_fusion(&slices).unwrap_or_else(|_| T::zero());
    total + gamma1 * fusion + gamma2 * eval_l1(&slices)
}

/// Inverse of each covariance; errors on a singular class.
pub fn invert_covariances<T: Scalar>(covariances: &[DMatrix<T>]) -> Result<PrecisionSet<T>> {
    let matrices = covariances
        .iter()
        .enumerate()
        .map(|(class, s)| {
            nalgebra::Cholesky::new(s.clone())
                .map(|c| {
                    let mut inv = c.inverse();
                    symmetrize(&mut inv);
                    inv
                })
                .ok_or(Error::NotPositiveDefinite { class })
        })
        .collect::<Result<Vec<_>>>()?;
    PrecisionSet::new(matrices)
}
