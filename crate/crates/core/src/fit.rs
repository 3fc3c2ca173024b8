//! Outer alternation between the coefficient and precision stages, plus the
//! least squares and single-class baselines.

use crate::error::{Error, Result};
use crate::jgl::{
    invert_covariances, jgl_fit, jgl_objective, residual_covariance, AdmmOptions, JglState, PrecisionSet,
};
use crate::panel::{build_stacked, center_panel, residuals, scale_panel, CoefficientSet, MultiClassPanel, StackedDesign};
use crate::scalar::Scalar;
use crate::spg::{exact_beta_objective, gls_loss, spg_fit, SpgOptions};
use crate::tuning::{
    gamma_max_heuristic, grid_search_beta, grid_search_omega, lambda_max_heuristic, RegularizationGrid,
};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    LeastSquares,
    SingleClass,
    MultiClass,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::LeastSquares => "ls",
            Estimator::SingleClass => "single-class",
            Estimator::MultiClass => "multi-class",
        }
    }
}

/// Selected `(lambda1, lambda2, gamma1, gamma2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalties<T> {
    pub lambda1: T,
    pub lambda2: T,
    pub gamma1: T,
    pub gamma2: T,
}

impl<T: Scalar> Penalties<T> {
    pub fn zero() -> Self {
        Penalties {
            lambda1: T::zero(),
            lambda2: T::zero(),
            gamma1: T::zero(),
            gamma2: T::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions<T> {
    /// VAR order P.
    pub order: usize,
    pub spg: SpgOptions<T>,
    pub admm: AdmmOptions<T>,
    /// Relative change of the joint objective that ends the alternation.
    pub outer_tol: T,
    pub max_outer: usize,
    /// Scale every (class, series) to unit variance before fitting; estimates
    /// are mapped back to the original units.
    pub standardize: bool,
    /// Run the precision stage; when false Omega stays at the identity.
    pub estimate_precision: bool,
}

impl<T: Scalar> Default for FitOptions<T> {
    fn default() -> Self {
        FitOptions {
            order: 1,
            spg: SpgOptions::default(),
            admm: AdmmOptions::default(),
            outer_tol: T::lit(1e-2),
            max_outer: 20,
            standardize: false,
            estimate_precision: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T: Scalar> {
    pub estimator: Estimator,
    pub beta: CoefficientSet<T>,
    pub omega: PrecisionSet<T>,
    pub penalties: Penalties<T>,
    /// Joint objective after each outer iteration.
    pub objective_trace: Vec<T>,
    pub outer_iterations: usize,
    pub converged: bool,
    pub class_names: Vec<String>,
    pub series_names: Vec<String>,
    pub warnings: Vec<String>,
}

/// Full penalized GLS criterion:
/// `sum_k [e_k' (W_k kron I) e_k - N jw log|W_k|] + lambda1 P1(beta) + lambda2 P2(beta)
///  + gamma1 P1(W) + gamma2 P2(W)`.
pub fn joint_objective<T: Scalar>(
    beta: &CoefficientSet<T>,
    omega: &PrecisionSet<T>,
    design: &StackedDesign<T>,
    penalties: &Penalties<T>,
    admm: &AdmmOptions<T>,
) -> Result<T> {
    let b = exact_beta_objective(beta, design, omega, penalties.lambda1, penalties.lambda2)?;
    // jgl_objective with S = 0 leaves the log-det and penalty terms
    let zero: Vec<DMatrix<T>> = vec![DMatrix::zeros(omega.series(), omega.series()); omega.classes()];
    let w = jgl_objective(
        omega,
        &zero,
        design.effective_len(),
        penalties.gamma1,
        penalties.gamma2,
        admm.log_det_weight,
    );
    if !w.is_finite() {
        let class = omega.first_not_positive_definite(T::zero()).unwrap_or(0);
        return Err(Error::NotPositiveDefinite { class });
    }
    Ok(b + w)
}

struct Prepared<T: Scalar> {
    design: StackedDesign<T>,
    scales: Option<Vec<DVector<T>>>,
}

fn prepare<T: Scalar>(panel: &MultiClassPanel<T>, order: usize, standardize: bool) -> Result<Prepared<T>> {
    let (centered, _) = center_panel(panel);
    let (data, scales) = if standardize {
        let (s, sd) = scale_panel(&centered);
        (s, Some(sd))
    } else {
        (centered, None)
    };
    Ok(Prepared {
        design: build_stacked(&data, order)?,
        scales,
    })
}

/// Maps estimates on standardized data back to the original units.
fn unscale<T: Scalar>(beta: &mut CoefficientSet<T>, omega: &mut PrecisionSet<T>, scales: &[DVector<T>]) -> Result<()> {
    let j = beta.series();
    for (k, sd) in scales.iter().enumerate() {
        let block = beta.block_mut(k);
        for c in 0..block.ncols() {
            for i in 0..j {
                block[(i, c)] *= sd[i] / sd[c % j];
            }
        }
    }
    let mats = omega
        .matrices()
        .iter()
        .zip(scales)
        .map(|(w, sd)| DMatrix::from_fn(j, j, |a, b| w[(a, b)] / (sd[a] * sd[b])))
        .collect();
    *omega = PrecisionSet::new(mats)?;
    Ok(())
}

/// Joint estimation with fusion across classes.
///
/// Starts from `Omega = I`, selects `(lambda1, lambda2)` and then
/// `(gamma1, gamma2)` by BIC on the first pass, and alternates the two stages
/// at the selected values until the relative change of the joint objective
/// drops below `options.outer_tol`. The panel is centered internally. With a
/// single class the fusion axes are pinned to zero.
pub fn fit_multiclass<T: Scalar>(
    panel: &MultiClassPanel<T>,
    grid: &RegularizationGrid<T>,
    options: &FitOptions<T>,
) -> Result<FitResult<T>> {
    let grid = if panel.classes() < 2 {
        grid.without_fusion()
    } else {
        grid.clone()
    };
    alternate(panel, &grid, options, Estimator::MultiClass)
}

/// Joint criterion with `lambda1 = gamma1 = 0`: sparse, no fusion.
pub fn fit_singleclass<T: Scalar>(
    panel: &MultiClassPanel<T>,
    grid: &RegularizationGrid<T>,
    options: &FitOptions<T>,
) -> Result<FitResult<T>> {
    alternate(panel, &grid.without_fusion(), options, Estimator::SingleClass)
}

fn alternate<T: Scalar>(
    panel: &MultiClassPanel<T>,
    grid: &RegularizationGrid<T>,
    options: &FitOptions<T>,
    estimator: Estimator,
) -> Result<FitResult<T>> {
    if options.max_outer == 0 {
        return Err(Error::InvalidParameter("max_outer must be positive".into()));
    }
    let Prepared { design, scales } = prepare(panel, options.order, options.standardize)?;
    let spec = design.spec;
    let n = design.effective_len();
    let mut warnings = Vec::new();

    // first pass: tune both stages
    let mut omega = PrecisionSet::identity(spec.classes, spec.series);
    let lmax = lambda_max_heuristic(&design, &omega);
    let l1 = grid.lambda1.resolve(lmax)?;
    let l2 = grid.lambda2.resolve(lmax)?;
    let sel = grid_search_beta(&design, &omega, &l1, &l2, &options.spg).map_err(|e| e.in_stage("coefficient"))?;
    let mut beta = sel.beta;
    let mut penalties = Penalties {
        lambda1: sel.lambda1,
        lambda2: sel.lambda2,
        gamma1: T::zero(),
        gamma2: T::zero(),
    };
    let mut state: Option<JglState<T>> = None;
    if options.estimate_precision {
        let s = residual_covariance(&residuals(&design, &beta)?)?;
        let gmax = gamma_max_heuristic(&s, n);
        let g1 = grid.gamma1.resolve(gmax)?;
        let g2 = grid.gamma2.resolve(gmax)?;
        let osel = grid_search_omega(&s, &g1, &g2, n, &options.admm).map_err(|e| e.in_stage("precision"))?;
        penalties.gamma1 = osel.gamma1;
        penalties.gamma2 = osel.gamma2;
        omega = osel.omega;
        state = Some(osel.state);
    }
    let mut trace = vec![joint_objective(&beta, &omega, &design, &penalties, &options.admm)?];
    let mut converged = false;

    while trace.len() < options.max_outer {
        let fit = spg_fit(&design, &omega, penalties.lambda1, penalties.lambda2, &options.spg, Some(&beta))
            .map_err(|e| e.in_stage("coefficient"))?;
        if !fit.converged {
            warnings.push(format!(
                "outer iteration {}: coefficient stage hit {} iterations",
                trace.len() + 1,
                options.spg.max_iter
            ));
        }
        // keep the previous block unless the exact criterion improves
        let old = exact_beta_objective(&beta, &design, &omega, penalties.lambda1, penalties.lambda2)?;
        let new = exact_beta_objective(&fit.beta, &design, &omega, penalties.lambda1, penalties.lambda2)?;
        if new <= old {
            beta = fit.beta;
        }

        if options.estimate_precision {
            let s = residual_covariance(&residuals(&design, &beta)?)?;
            let out = jgl_fit(&s, penalties.gamma1, penalties.gamma2, n, &options.admm, state.as_ref())
                .map_err(|e| e.in_stage("precision"))?;
            if !out.converged {
                warnings.push(format!(
                    "outer iteration {}: precision stage residuals {:e}/{:e}",
                    trace.len() + 1,
                    out.primal_residual,
                    out.dual_residual
                ));
            }
            let candidate = joint_objective(&beta, &out.precision, &design, &penalties, &options.admm);
            let current = joint_objective(&beta, &omega, &design, &penalties, &options.admm)?;
            if matches!(candidate, Ok(c) if c <= current) {
                omega = out.precision;
            }
            state = Some(out.state);
        }

        let obj = joint_objective(&beta, &omega, &design, &penalties, &options.admm)?;
        let prev = *trace.last().expect("non-empty trace");
        trace.push(obj);
        let denom = prev.abs().max(T::lit(1e-300));
        if (prev - obj).abs() / denom < options.outer_tol {
            converged = true;
            break;
        }
    }

    if let Some(sd) = &scales {
        unscale(&mut beta, &mut omega, sd)?;
    }
    Ok(FitResult {
        estimator,
        beta,
        omega,
        penalties,
        outer_iterations: trace.len(),
        objective_trace: trace,
        converged,
        class_names: panel.class_names().to_vec(),
        series_names: panel.series_names().to_vec(),
        warnings,
    })
}

/// Separate unpenalized least squares per class and equation.
///
/// `Omega` is the inverse residual covariance when that is invertible, the
/// identity otherwise (with a warning).
pub fn fit_ls<T: Scalar>(panel: &MultiClassPanel<T>, order: usize) -> Result<FitResult<T>> {
    let Prepared { design, .. } = prepare(panel, order, false)?;
    let spec = design.spec;
    let n = spec.effective_len();
    let params = spec.series * spec.order;
    let mut blocks = Vec::with_capacity(spec.classes);
    for (class, c) in design.classes.iter().enumerate() {
        if n <= params {
            return Err(Error::Underdetermined { class, n, params });
        }
        let chol = nalgebra::Cholesky::new(c.gram.clone()).ok_or(Error::SingularNormalEquations { class })?;
        // B' = G^{-1} X0'Y
        let bt = chol.solve(&c.cross.transpose());
        if bt.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularNormalEquations { class });
        }
        blocks.push(bt.transpose());
    }
    let beta = CoefficientSet::from_blocks(blocks, order)?;
    let mut warnings = Vec::new();
    let s = residual_covariance(&residuals(&design, &beta)?)?;
    let omega = match invert_covariances(&s) {
        Ok(w) if w.ensure_positive_definite().is_ok() => w,
        _ => {
            warnings.push("residual covariance not invertible; precision set to identity".to_string());
            PrecisionSet::identity(spec.classes, spec.series)
        }
    };
    let penalties = Penalties::zero();
    let obj = joint_objective(&beta, &omega, &design, &penalties, &AdmmOptions::default())?;
    Ok(FitResult {
        estimator: Estimator::LeastSquares,
        beta,
        omega,
        penalties,
        objective_trace: vec![obj],
        outer_iterations: 1,
        converged: true,
        class_names: panel.class_names().to_vec(),
        series_names: panel.series_names().to_vec(),
        warnings,
    })
}

/// GLS loss of a fit on a panel, after centering.
pub fn fit_loss<T: Scalar>(panel: &MultiClassPanel<T>, fit: &FitResult<T>) -> Result<T> {
    let Prepared { design, .. } = prepare(panel, fit.beta.order(), false)?;
    gls_loss(&fit.beta, &design, &fit.omega)
}
