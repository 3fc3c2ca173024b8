//! BIC-driven grid search over the penalty parameters of both stages.

use crate::error::{Error, Result};
use crate::jgl::{jgl_fit, AdmmOptions, JglState, PrecisionSet};
use crate::linalg;
use crate::panel::{CoefficientSet, StackedDesign};
use crate::scalar::Scalar;
use crate::spg::{gls_loss, spg_fit, SpgOptions};
use nalgebra::DMatrix;
use rayon::prelude::*;

/// One axis of the regularization grid.
#[derive(Debug, Clone, PartialEq)]
pub enum GridAxis<T> {
    /// `points` log-spaced values over `[0.01, 1] * max`, where `max` is a
    /// data-driven heuristic resolved at fit time.
    Auto { points: usize },
    Fixed(Vec<T>),
}

impl<T: Scalar> GridAxis<T> {
    pub fn zero() -> Self {
        GridAxis::Fixed(vec![T::zero()])
    }

    /// Concrete ascending, deduplicated candidate list.
    pub fn resolve(&self, max: T) -> Result<Vec<T>> {
        match self {
            GridAxis::Auto { points } => {
                if *points == 0 {
                    return Err(Error::InvalidParameter("grid needs at least one point".into()));
                }
                Ok(log_spaced(max, *points))
            }
            GridAxis::Fixed(values) => {
                if values.is_empty() {
                    return Err(Error::InvalidParameter("grid axis is empty".into()));
                }
                if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= T::zero())) {
                    return Err(Error::InvalidParameter(format!("grid value {v} must be finite and >= 0")));
                }
                let mut out = values.clone();
                out.sort_by(|a, b| a.partial_cmp(b).unwrap());
                out.dedup();
                Ok(out)
            }
        }
    }
}

fn log_spaced<T: Scalar>(max: T, points: usize) -> Vec<T> {
    if points == 1 {
        return vec![max];
    }
    let lo = T::lit(0.01f64.ln());
    (0..points)
        .map(|i| {
            let frac = T::from_count(i) / T::from_count(points - 1);
            max * (lo * (T::one() - frac)).exp()
        })
        .collect()
}

/// Candidate values for `(lambda1, lambda2)` and `(gamma1, gamma2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizationGrid<T> {
    pub lambda1: GridAxis<T>,
    pub lambda2: GridAxis<T>,
    pub gamma1: GridAxis<T>,
    pub gamma2: GridAxis<T>,
}

impl<T: Scalar> Default for RegularizationGrid<T> {
    fn default() -> Self {
        Self::auto(10)
    }
}

impl<T: Scalar> RegularizationGrid<T> {
    pub fn auto(points: usize) -> Self {
        RegularizationGrid {
            lambda1: GridAxis::Auto { points },
            lambda2: GridAxis::Auto { points },
            gamma1: GridAxis::Auto { points },
            gamma2: GridAxis::Auto { points },
        }
    }

    /// Single cell.
    pub fn single(lambda1: T, lambda2: T, gamma1: T, gamma2: T) -> Self {
        RegularizationGrid {
            lambda1: GridAxis::Fixed(vec![lambda1]),
            lambda2: GridAxis::Fixed(vec![lambda2]),
            gamma1: GridAxis::Fixed(vec![gamma1]),
            gamma2: GridAxis::Fixed(vec![gamma2]),
        }
    }

    /// Same grid with both fusion axes pinned to zero.
    pub fn without_fusion(&self) -> Self {
        RegularizationGrid {
            lambda1: GridAxis::zero(),
            gamma1: GridAxis::zero(),
            ..self.clone()
        }
    }
}

/// Smallest `lambda` that zeroes every coefficient of an unfused lasso,
/// `max |2 Omega_k Y_k'X0_k|`; 1 when the data carry no signal.
pub fn lambda_max_heuristic<T: Scalar>(design: &StackedDesign<T>, omega: &PrecisionSet<T>) -> T {
    let m = design
        .classes
        .iter()
        .zip(omega.matrices())
        .map(|(c, w)| (w * &c.cross).amax())
        .fold(T::zero(), |a, b| a.max(b));
    if m > T::zero() {
        T::lit(2.0) * m
    } else {
        T::one()
    }
}

/// `N max |S off-diagonal|`, falling back to the diagonal and then to 1.
pub fn gamma_max_heuristic<T: Scalar>(covariances: &[DMatrix<T>], n: usize) -> T {
    let mut off = T::zero();
    let mut diag = T::zero();
    for s in covariances {
        for i in 0..s.nrows() {
            for j in 0..s.ncols() {
                if i == j {
                    diag = diag.max(s[(i, j)].abs());
                } else {
                    off = off.max(s[(i, j)].abs());
                }
            }
        }
    }
    let base = if off > T::zero() { off } else { diag };
    if base > T::zero() {
        base * T::from_count(n)
    } else {
        T::one()
    }
}

/// `2 g(beta) + df log N`, with df the number of nonzero coefficients.
pub fn bic_beta<T: Scalar>(beta: &CoefficientSet<T>, design: &StackedDesign<T>, omega: &PrecisionSet<T>) -> Result<T> {
    let g = gls_loss(beta, design, omega)?;
    let n = T::from_count(design.effective_len());
    Ok(T::lit(2.0) * g + T::from_count(beta.nonzero_count()) * n.ln())
}

/// `sum_k N [tr(S_k W_k) - log|W_k|] + log N sum_k df_k`, with
/// `df_k = J + #{i<j : w_ij != 0}`.
pub fn bic_omega<T: Scalar>(omega: &PrecisionSet<T>, covariances: &[DMatrix<T>], n: usize) -> Result<T> {
    if covariances.len() != omega.classes() {
        return Err(Error::DimensionMismatch("one covariance per class".into()));
    }
    let nf = T::from_count(n);
    let mut total = T::zero();
    for (k, (w, s)) in omega.matrices().iter().zip(covariances).enumerate() {
        if s.shape() != w.shape() {
            return Err(Error::DimensionMismatch(format!("class {k} covariance shape")));
        }
        let ld = linalg::log_det_spd(w).ok_or(Error::NotPositiveDefinite { class: k })?;
        if linalg::min_eigenvalue(w) <= T::zero() {
            return Err(Error::NotPositiveDefinite { class: k });
        }
        total += nf * (linalg::trace_product(s, w) - ld);
    }
    let df: usize = omega.edge_counts().iter().map(|e| e + omega.series()).sum();
    Ok(total + nf.ln() * T::from_count(df))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellScore<T> {
    pub first: T,
    pub second: T,
    pub bic: T,
}

/// Lower BIC wins; exact ties go to the larger (first, second) pair.
fn better<T: Scalar>(a: &CellScore<T>, b: &CellScore<T>) -> bool {
    if a.bic != b.bic {
        return a.bic < b.bic;
    }
    if a.first != b.first {
        return a.first > b.first;
    }
    a.second > b.second
}

#[derive(Debug, Clone)]
pub struct BetaSelection<T: Scalar> {
    pub lambda1: T,
    pub lambda2: T,
    pub beta: CoefficientSet<T>,
    pub bic: T,
    pub cells: Vec<CellScore<T>>,
}

/// Fits every `(lambda1, lambda2)` cell and keeps the BIC minimizer.
///
/// Each `lambda1` row is an independent warm-started path from the largest
/// `lambda2` down, started at `beta = 0`; rows run in parallel.
pub fn grid_search_beta<T: Scalar>(
    design: &StackedDesign<T>,
    omega: &PrecisionSet<T>,
    lambda1: &[T],
    lambda2: &[T],
    options: &SpgOptions<T>,
) -> Result<BetaSelection<T>> {
    let l1 = GridAxis::Fixed(lambda1.to_vec()).resolve(T::one())?;
    let l2 = GridAxis::Fixed(lambda2.to_vec()).resolve(T::one())?;
    let rows: Vec<Vec<(CellScore<T>, CoefficientSet<T>)>> = l1
        .par_iter()
        .map(|&a| {
            let mut warm: Option<CoefficientSet<T>> = None;
            let mut row = Vec::with_capacity(l2.len());
            for &b in l2.iter().rev() {
                let fit = spg_fit(design, omega, a, b, options, warm.as_ref())?;
                let bic = bic_beta(&fit.beta, design, omega)?;
                warm = Some(fit.beta.clone());
                row.push((
                    CellScore {
                        first: a,
                        second: b,
                        bic,
                    },
                    fit.beta,
                ));
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    let mut best: Option<(CellScore<T>, CoefficientSet<T>)> = None;
    for (score, beta) in rows.into_iter().flatten() {
        cells.push(score);
        if best.as_ref().is_none_or(|(s, _)| better(&score, s)) {
            best = Some((score, beta));
        }
    }
    let (score, beta) = best.expect("non-empty grid");
    Ok(BetaSelection {
        lambda1: score.first,
        lambda2: score.second,
        beta,
        bic: score.bic,
        cells,
    })
}

#[derive(Debug, Clone)]
pub struct OmegaSelection<T: Scalar> {
    pub gamma1: T,
    pub gamma2: T,
    pub omega: PrecisionSet<T>,
    pub state: JglState<T>,
    pub bic: T,
    pub cells: Vec<CellScore<T>>,
}

/// Fits every `(gamma1, gamma2)` cell with the joint graphical lasso and keeps
/// the BIC minimizer. Same path and tie conventions as [`grid_search_beta`].
pub fn grid_search_omega<T: Scalar>(
    covariances: &[DMatrix<T>],
    gamma1: &[T],
    gamma2: &[T],
    n: usize,
    options: &AdmmOptions<T>,
) -> Result<OmegaSelection<T>> {
    let g1 = GridAxis::Fixed(gamma1.to_vec()).resolve(T::one())?;
    let g2 = GridAxis::Fixed(gamma2.to_vec()).resolve(T::one())?;
    let rows: Vec<Vec<(CellScore<T>, PrecisionSet<T>, JglState<T>)>> = g1
        .par_iter()
        .map(|&a| {
            let mut warm: Option<JglState<T>> = None;
            let mut row = Vec::with_capacity(g2.len());
            for &b in g2.iter().rev() {
                let fit = jgl_fit(covariances, a, b, n, options, warm.as_ref())?;
                let bic = bic_omega(&fit.precision, covariances, n)?;
                warm = Some(fit.state.clone());
                row.push((
                    CellScore {
                        first: a,
                        second: b,
                        bic,
                    },
                    fit.precision,
                    fit.state,
                ));
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    let mut best: Option<(CellScore<T>, PrecisionSet<T>, JglState<T>)> = None;
    for (score, omega, state) in rows.into_iter().flatten() {
        cells.push(score);
        if best.as_ref().is_none_or(|(s, _, _)| better(&score, s)) {
            best = Some((score, omega, state));
        }
    }
    let (score, omega, state) = best.expect("non-empty grid");
    Ok(OmegaSelection {
        gamma1: score.first,
        gamma2: score.second,
        omega,
        state,
        bic: score.bic,
        cells,
    })
}
